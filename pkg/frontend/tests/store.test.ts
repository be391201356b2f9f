import { describe, expect, it } from "vitest";
import { ApiError, ConflictError, ConnectionLostError } from "../src/api";
import { TriageBoard } from "../src/store";
import type { ClustersPayload, SectionsPayload, Target } from "../src/types";

function sectionsPayload(): SectionsPayload {
  return {
    revision: 3,
    sections: [
      {
        name: "description",
        frequency: 20,
        sample_sentences: ["The plumage is bright red."],
        verdict: "unlabeled",
      },
      {
        name: "history",
        frequency: 8,
        sample_sentences: ["First recorded in 1854."],
        verdict: "nonvisual",
      },
      {
        name: "habitat",
        frequency: 11,
        sample_sentences: ["Found in wetland margins."],
        verdict: "unlabeled",
      },
    ],
  };
}

function clustersPayload(): ClustersPayload {
  return {
    revision: 3,
    cluster_model_id: "km-abc",
    clusters: [
      {
        cluster_index: 0,
        size: 14,
        exemplars: [
          { sentence_id: "s1", class_id: "wren", text: "Short rounded wings.", distance: 0.2 },
        ],
        top_sections: { description: 9 },
        verdict: "unlabeled",
      },
      {
        cluster_index: 1,
        size: 6,
        exemplars: [
          { sentence_id: "s2", class_id: "heron", text: null, distance: 0.4 },
        ],
        top_sections: { history: 4 },
        verdict: "unlabeled",
      },
    ],
  };
}

function loadedBoard(): TriageBoard {
  const board = new TriageBoard();
  board.loadSnapshot(sectionsPayload(), clustersPayload());
  return board;
}

const DESCRIPTION: Target = { kind: "section", name: "description" };
const CLUSTER0: Target = { kind: "cluster", index: 0 };

describe("snapshot loading", () => {
  it("adopts rows, revision, and cluster model id", () => {
    const board = loadedBoard();
    expect(board.sections.map((s) => s.name)).toEqual(["description", "history", "habitat"]);
    expect(board.clusters).toHaveLength(2);
    expect(board.revision).toBe(3);
    expect(board.clusterModelId).toBe("km-abc");
    expect(board.loaded).toBe(true);
  });

  it("keeps optimistic verdicts for writes still in flight", () => {
    const board = loadedBoard();
    board.applyOptimistic(DESCRIPTION, "visual");
    board.loadSnapshot(sectionsPayload(), clustersPayload());
    expect(board.sections[0]!.verdict).toBe("visual");
    expect(board.hasPending()).toBe(true);
  });

  it("clears an offline banner once a snapshot arrives", () => {
    const board = loadedBoard();
    board.noteConnectionLoss(new ConnectionLostError("down"));
    expect(board.banner?.kind).toBe("offline");
    board.loadSnapshot(sectionsPayload(), clustersPayload());
    expect(board.banner).toBeNull();
  });
});

describe("optimistic writes", () => {
  it("paints the verdict immediately and tracks the write", () => {
    const board = loadedBoard();
    board.applyOptimistic(DESCRIPTION, "visual");
    expect(board.sections[0]!.verdict).toBe("visual");
    expect(board.pendingFor(DESCRIPTION)).toBe(true);
  });

  it("reconcile adopts the server verdict and revision", () => {
    const board = loadedBoard();
    board.applyOptimistic(CLUSTER0, "visual");
    board.reconcile(CLUSTER0, { verdict: "visual", revision: 4 });
    expect(board.clusters[0]!.verdict).toBe("visual");
    expect(board.revision).toBe(4);
    expect(board.pendingFor(CLUSTER0)).toBe(false);
  });

  it("reconcile trusts the server when it answers a different verdict", () => {
    const board = loadedBoard();
    board.applyOptimistic(DESCRIPTION, "visual");
    board.reconcile(DESCRIPTION, { verdict: "nonvisual", revision: 5 });
    expect(board.sections[0]!.verdict).toBe("nonvisual");
  });

  it("rollback restores the previous verdict and surfaces the conflict", () => {
    const board = loadedBoard();
    board.applyOptimistic(DESCRIPTION, "visual");
    board.rollback(DESCRIPTION, new ConflictError("stale revision: expected 2, labels are at 6"));
    expect(board.sections[0]!.verdict).toBe("unlabeled");
    expect(board.banner).toEqual({
      kind: "conflict",
      message: "stale revision: expected 2, labels are at 6",
    });
    expect(board.pendingFor(DESCRIPTION)).toBe(false);
  });

  it("a re-toggle while a write is in flight rolls back to the pre-flight verdict", () => {
    const board = loadedBoard();
    board.applyOptimistic(DESCRIPTION, "visual");
    board.applyOptimistic(DESCRIPTION, "nonvisual");
    board.rollback(DESCRIPTION, new ConflictError("stale"));
    expect(board.sections[0]!.verdict).toBe("unlabeled");
  });

  it("rollback marks the board offline on a connection failure", () => {
    const board = loadedBoard();
    board.applyOptimistic(CLUSTER0, "nonvisual");
    board.rollback(CLUSTER0, new ConnectionLostError("refused"));
    expect(board.clusters[0]!.verdict).toBe("unlabeled");
    expect(board.banner?.kind).toBe("offline");
  });

  it("other service errors are surfaced verbatim", () => {
    const board = loadedBoard();
    board.applyOptimistic(DESCRIPTION, "visual");
    board.rollback(DESCRIPTION, new ApiError(404, "unknown section: description"));
    expect(board.banner).toEqual({ kind: "error", message: "unknown section: description" });
  });

  it("a successful reconcile clears a lingering conflict banner", () => {
    const board = loadedBoard();
    board.surfaceError(new ConflictError("stale"));
    board.applyOptimistic(DESCRIPTION, "visual");
    board.reconcile(DESCRIPTION, { verdict: "visual", revision: 6 });
    expect(board.banner).toBeNull();
  });
});

describe("derived state", () => {
  it("counts labeled rows for the progress display", () => {
    const board = loadedBoard();
    expect(board.progress()).toEqual({
      sections: { labeled: 1, total: 3 },
      clusters: { labeled: 0, total: 2 },
    });
    board.applyOptimistic(CLUSTER0, "visual");
    expect(board.progress().clusters).toEqual({ labeled: 1, total: 2 });
  });

  it("recompute is gated on at least one visual label", () => {
    const board = loadedBoard();
    expect(board.canRecompute()).toBe(false);
    board.applyOptimistic(DESCRIPTION, "visual");
    expect(board.canRecompute()).toBe(true);
    board.applyOptimistic(DESCRIPTION, "unlabeled");
    expect(board.canRecompute()).toBe(false);
    board.applyOptimistic(CLUSTER0, "visual");
    expect(board.canRecompute()).toBe(true);
  });

  it("filters rows by verdict", () => {
    const board = loadedBoard();
    board.verdictFilter = "nonvisual";
    expect(board.visibleSections().map((s) => s.name)).toEqual(["history"]);
    expect(board.visibleClusters()).toHaveLength(0);
  });

  it("searches section names and sample sentences", () => {
    const board = loadedBoard();
    board.query = "plumage";
    expect(board.visibleSections().map((s) => s.name)).toEqual(["description"]);
    board.query = "HABITAT";
    expect(board.visibleSections().map((s) => s.name)).toEqual(["habitat"]);
  });

  it("searches cluster exemplar text, class ids, and section names", () => {
    const board = loadedBoard();
    board.query = "rounded wings";
    expect(board.visibleClusters().map((c) => c.cluster_index)).toEqual([0]);
    board.query = "heron";
    expect(board.visibleClusters().map((c) => c.cluster_index)).toEqual([1]);
    board.query = "history";
    expect(board.visibleClusters().map((c) => c.cluster_index)).toEqual([1]);
  });

  it("treats null exemplar text as unsearchable rather than crashing", () => {
    const board = loadedBoard();
    board.query = "null";
    expect(board.visibleClusters()).toHaveLength(0);
  });
});

describe("selection", () => {
  it("walks sections first, then clusters, and clamps at the ends", () => {
    const board = loadedBoard();
    board.moveSelection(1);
    expect(board.selected).toEqual({ kind: "section", name: "description" });
    board.moveSelection(1);
    board.moveSelection(1);
    board.moveSelection(1);
    expect(board.selected).toEqual({ kind: "cluster", index: 0 });
    board.moveSelection(5);
    expect(board.selected).toEqual({ kind: "cluster", index: 1 });
    board.moveSelection(-10);
    expect(board.selected).toEqual({ kind: "section", name: "description" });
  });

  it("respects the active filter when navigating", () => {
    const board = loadedBoard();
    board.verdictFilter = "nonvisual";
    board.moveSelection(1);
    expect(board.selected).toEqual({ kind: "section", name: "history" });
    board.moveSelection(1);
    expect(board.selected).toEqual({ kind: "section", name: "history" });
  });

  it("drops the selection when the row disappears from the snapshot", () => {
    const board = loadedBoard();
    board.select({ kind: "section", name: "description" });
    const fewer = sectionsPayload();
    fewer.sections = fewer.sections.filter((s) => s.name !== "description");
    board.loadSnapshot(fewer, clustersPayload());
    expect(board.selected).toBeNull();
  });
});
