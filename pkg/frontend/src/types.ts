/** Payload shapes of the triage HTTP API — the only interface this UI uses. */

export type Verdict = "visual" | "nonvisual" | "unlabeled";

export interface SectionRow {
  name: string;
  frequency: number;
  sample_sentences: string[];
  verdict: Verdict;
}

export interface Exemplar {
  sentence_id: string;
  class_id: string;
  text: string | null;
  distance: number;
}

export interface ClusterCard {
  cluster_index: number;
  size: number;
  exemplars: Exemplar[];
  top_sections: Record<string, number>;
  verdict: Verdict;
}

export interface SectionsPayload {
  revision: number;
  sections: SectionRow[];
}

export interface ClustersPayload {
  revision: number;
  cluster_model_id: string | null;
  clusters: ClusterCard[];
}

export interface LabelsPayload {
  sections: Record<string, Verdict>;
  clusters: Record<string, Verdict>;
  cluster_model_id: string | null;
  revision: number;
}

/** Response of a successful verdict write. */
export interface WriteAck {
  verdict: Verdict;
  revision: number;
  section?: string;
  cluster_index?: number;
}

export interface ModeStats {
  kept: number;
  total: number;
  retention: number;
  fallback_classes: string[];
}

export interface RecomputeReport {
  revision: number;
  modes: Record<string, ModeStats>;
}

/** A labelable thing on the board. */
export type Target =
  | { kind: "section"; name: string }
  | { kind: "cluster"; index: number };

export function targetKey(target: Target): string {
  return target.kind === "section"
    ? `section:${target.name}`
    : `cluster:${target.index}`;
}
