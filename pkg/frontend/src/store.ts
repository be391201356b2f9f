import { ConflictError, ConnectionLostError } from "./api";
import type {
  ClusterCard,
  ClustersPayload,
  RecomputeReport,
  SectionRow,
  SectionsPayload,
  Target,
  Verdict,
} from "./types";
import { targetKey } from "./types";

export type VerdictFilter = Verdict | "all";

export type Banner =
  | { kind: "conflict"; message: string }
  | { kind: "error"; message: string }
  | { kind: "offline"; message: string };

interface PendingWrite {
  target: Target;
  verdict: Verdict;
  previous: Verdict;
}

interface Progress {
  labeled: number;
  total: number;
}

/**
 * Client-side board state: the latest server snapshot overlaid with
 * in-flight optimistic verdict writes.
 */
export class TriageBoard {
  revision = 0;
  clusterModelId: string | null = null;
  sections: SectionRow[] = [];
  clusters: ClusterCard[] = [];
  lastRecompute: RecomputeReport | null = null;
  banner: Banner | null = null;
  verdictFilter: VerdictFilter = "all";
  query = "";
  selected: Target | null = null;
  loaded = false;

  private readonly pending = new Map<string, PendingWrite>();

  /** Replace the board with a fresh GET snapshot, re-applying in-flight writes. */
  loadSnapshot(sections: SectionsPayload, clusters: ClustersPayload): void {
    this.sections = sections.sections.map((row) => ({ ...row }));
    this.clusters = clusters.clusters.map((card) => ({ ...card }));
    this.revision = Math.max(sections.revision, clusters.revision);
    this.clusterModelId = clusters.cluster_model_id;
    for (const write of this.pending.values()) {
      this.paint(write.target, write.verdict);
    }
    if (this.banner?.kind === "offline") this.banner = null;
    this.loaded = true;
    if (this.selected && !this.find(this.selected)) this.selected = null;
  }

  /** Show the verdict immediately; the write is reconciled or rolled back later. */
  applyOptimistic(target: Target, verdict: Verdict): void {
    const row = this.find(target);
    if (!row) return;
    const key = targetKey(target);
    const inFlight = this.pending.get(key);
    this.pending.set(key, {
      target,
      verdict,
      // keep the pre-optimistic verdict if a write for this target is already in flight
      previous: inFlight ? inFlight.previous : row.verdict,
    });
    row.verdict = verdict;
  }

  /** A write succeeded: the server's verdict and revision win. */
  reconcile(target: Target, ack: { verdict: Verdict; revision: number }): void {
    this.pending.delete(targetKey(target));
    this.paint(target, ack.verdict);
    this.revision = Math.max(this.revision, ack.revision);
    if (this.banner?.kind === "conflict") this.banner = null;
  }

  /** A write failed: restore the old verdict and surface what happened. */
  rollback(target: Target, error: Error): void {
    const write = this.pending.get(targetKey(target));
    this.pending.delete(targetKey(target));
    if (write) this.paint(target, write.previous);
    this.surfaceError(error);
  }

  /** Show a request failure without touching any verdicts. */
  surfaceError(error: Error): void {
    if (error instanceof ConflictError) {
      this.banner = { kind: "conflict", message: error.detail };
    } else if (error instanceof ConnectionLostError) {
      this.banner = { kind: "offline", message: error.message };
    } else {
      this.banner = { kind: "error", message: error.message };
    }
  }

  noteConnectionLoss(error: Error): void {
    this.banner = { kind: "offline", message: error.message };
  }

  dismissBanner(): void {
    this.banner = null;
  }

  hasPending(): boolean {
    return this.pending.size > 0;
  }

  pendingFor(target: Target): boolean {
    return this.pending.has(targetKey(target));
  }

  progress(): { sections: Progress; clusters: Progress } {
    const count = (rows: Array<{ verdict: Verdict }>): Progress => ({
      labeled: rows.filter((row) => row.verdict !== "unlabeled").length,
      total: rows.length,
    });
    return { sections: count(this.sections), clusters: count(this.clusters) };
  }

  /** Recompute needs at least one visual label to act on. */
  canRecompute(): boolean {
    return (
      this.sections.some((row) => row.verdict === "visual") ||
      this.clusters.some((card) => card.verdict === "visual")
    );
  }

  visibleSections(): SectionRow[] {
    const needle = this.query.trim().toLowerCase();
    return this.sections.filter((row) => {
      if (!this.matchesVerdict(row.verdict)) return false;
      if (!needle) return true;
      return (
        row.name.toLowerCase().includes(needle) ||
        row.sample_sentences.some((text) => text.toLowerCase().includes(needle))
      );
    });
  }

  visibleClusters(): ClusterCard[] {
    const needle = this.query.trim().toLowerCase();
    return this.clusters.filter((card) => {
      if (!this.matchesVerdict(card.verdict)) return false;
      if (!needle) return true;
      if (String(card.cluster_index).includes(needle)) return true;
      if (Object.keys(card.top_sections).some((name) => name.toLowerCase().includes(needle))) {
        return true;
      }
      return card.exemplars.some(
        (ex) =>
          ex.class_id.toLowerCase().includes(needle) ||
          (ex.text ?? "").toLowerCase().includes(needle),
      );
    });
  }

  /** Keyboard-navigable order: visible sections first, then visible clusters. */
  visibleTargets(): Target[] {
    return [
      ...this.visibleSections().map(
        (row): Target => ({ kind: "section", name: row.name }),
      ),
      ...this.visibleClusters().map(
        (card): Target => ({ kind: "cluster", index: card.cluster_index }),
      ),
    ];
  }

  moveSelection(delta: number): void {
    const targets = this.visibleTargets();
    if (targets.length === 0) {
      this.selected = null;
      return;
    }
    if (!this.selected) {
      this.selected = delta >= 0 ? targets[0]! : targets[targets.length - 1]!;
      return;
    }
    const key = targetKey(this.selected);
    const index = targets.findIndex((t) => targetKey(t) === key);
    if (index < 0) {
      this.selected = targets[0]!;
      return;
    }
    const next = Math.min(targets.length - 1, Math.max(0, index + delta));
    this.selected = targets[next]!;
  }

  select(target: Target): void {
    this.selected = target;
  }

  private matchesVerdict(verdict: Verdict): boolean {
    return this.verdictFilter === "all" || verdict === this.verdictFilter;
  }

  private find(target: Target): { verdict: Verdict } | undefined {
    return target.kind === "section"
      ? this.sections.find((row) => row.name === target.name)
      : this.clusters.find((card) => card.cluster_index === target.index);
  }

  private paint(target: Target, verdict: Verdict): void {
    const row = this.find(target);
    if (row) row.verdict = verdict;
  }
}
