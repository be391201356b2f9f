import { ConflictError, TriageApi } from "./api";
import { interpretKey } from "./keyboard";
import { TriageBoard, type VerdictFilter } from "./store";
import { targetKey, type Target, type Verdict } from "./types";
import { render, type Handlers } from "./view";
import "./styles.css";

const api = new TriageApi();
const board = new TriageBoard();
const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

// Writes are serialized so each one carries the revision from the previous
// ack; concurrent edits from another tab still surface as 409 conflicts.
let writeQueue: Promise<void> = Promise.resolve();

function draw(): void {
  const active = document.activeElement;
  const searchFocused = active instanceof HTMLInputElement && active.id === "search";
  const caret = searchFocused ? active.selectionStart : null;
  render(root!, board, handlers);
  if (searchFocused) {
    const search = document.getElementById("search");
    if (search instanceof HTMLInputElement) {
      search.focus();
      if (caret !== null) search.setSelectionRange(caret, caret);
    }
  }
}

async function refresh(): Promise<void> {
  try {
    const [sections, clusters] = await Promise.all([
      api.getSections(),
      api.getClusters(),
    ]);
    board.loadSnapshot(sections, clusters);
  } catch (err) {
    board.noteConnectionLoss(err instanceof Error ? err : new Error(String(err)));
  }
  draw();
}

function setVerdict(target: Target, verdict: Verdict): void {
  board.applyOptimistic(target, verdict);
  draw();
  writeQueue = writeQueue.then(async () => {
    try {
      const opts = {
        revision: board.revision,
        clusterModelId:
          target.kind === "cluster" ? (board.clusterModelId ?? undefined) : undefined,
      };
      const ack =
        target.kind === "section"
          ? await api.labelSection(target.name, verdict, opts)
          : await api.labelCluster(target.index, verdict, opts);
      board.reconcile(target, ack);
      draw();
    } catch (err) {
      const error = err instanceof Error ? err : new Error(String(err));
      board.rollback(target, error);
      draw();
      if (error instanceof ConflictError) {
        // someone else moved the revision; pull their state
        await refresh();
      }
    }
  });
}

async function recompute(): Promise<void> {
  if (!board.canRecompute()) return;
  try {
    board.lastRecompute = await api.recompute();
    board.revision = Math.max(board.revision, board.lastRecompute.revision);
    if (board.banner) board.banner = null;
  } catch (err) {
    board.surfaceError(err instanceof Error ? err : new Error(String(err)));
  }
  draw();
}

const handlers: Handlers = {
  setVerdict,
  select(target) {
    board.select(target);
    draw();
  },
  setFilter(filter: VerdictFilter) {
    board.verdictFilter = filter;
    draw();
  },
  setQuery(query: string) {
    board.query = query;
    draw();
  },
  refresh() {
    void refresh();
  },
  recompute() {
    void recompute();
  },
  dismissBanner() {
    board.dismissBanner();
    draw();
  },
};

function isEditable(target: EventTarget | null): boolean {
  if (!(target instanceof HTMLElement)) return false;
  return (
    target instanceof HTMLInputElement ||
    target instanceof HTMLTextAreaElement ||
    target instanceof HTMLSelectElement ||
    target.isContentEditable
  );
}

document.addEventListener("keydown", (event) => {
  const action = interpretKey(event.key, {
    editable: isEditable(event.target),
    modified: event.ctrlKey || event.metaKey || event.altKey,
  });
  if (!action) return;
  switch (action.type) {
    case "verdict": {
      if (!board.selected) board.moveSelection(1);
      if (board.selected) setVerdict(board.selected, action.verdict);
      break;
    }
    case "move": {
      board.moveSelection(action.delta);
      draw();
      const row = board.selected
        ? root.querySelector<HTMLElement>(
            `[data-key="${CSS.escape(targetKey(board.selected))}"]`,
          )
        : null;
      row?.scrollIntoView({ block: "nearest" });
      break;
    }
    case "recompute":
      void recompute();
      break;
    case "refresh":
      void refresh();
      break;
    case "focus-search": {
      event.preventDefault();
      const search = document.getElementById("search");
      if (search instanceof HTMLInputElement) search.focus();
      break;
    }
    case "dismiss": {
      if (isEditable(event.target) && event.target instanceof HTMLElement) {
        event.target.blur();
      } else {
        board.dismissBanner();
        draw();
      }
      break;
    }
  }
});

draw();
void refresh();

// keep the board close to the latest server state even without user action
setInterval(() => {
  if (!board.hasPending()) void refresh();
}, 20_000);
