import type { TriageBoard, VerdictFilter } from "./store";
import type { ClusterCard, SectionRow, Target, Verdict } from "./types";
import { targetKey } from "./types";

export interface Handlers {
  setVerdict(target: Target, verdict: Verdict): void;
  select(target: Target): void;
  setFilter(filter: VerdictFilter): void;
  setQuery(query: string): void;
  refresh(): void;
  recompute(): void;
  dismissBanner(): void;
}

const VERDICTS: Verdict[] = ["visual", "nonvisual", "unlabeled"];
const VERDICT_GLYPH: Record<Verdict, string> = {
  visual: "V",
  nonvisual: "N",
  unlabeled: "U",
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function verdictBadge(verdict: Verdict): HTMLElement {
  return el("span", `badge badge-${verdict}`, verdict);
}

function verdictButtons(
  target: Target,
  current: Verdict,
  handlers: Handlers,
): HTMLElement {
  const group = el("div", "verdict-buttons");
  for (const verdict of VERDICTS) {
    const button = el("button", "verdict-button", VERDICT_GLYPH[verdict]);
    button.type = "button";
    button.title = `mark ${verdict}`;
    if (verdict === current) button.classList.add("active");
    button.addEventListener("click", (event) => {
      event.stopPropagation();
      handlers.setVerdict(target, verdict);
    });
    group.appendChild(button);
  }
  return group;
}

function sectionRow(
  row: SectionRow,
  board: TriageBoard,
  handlers: Handlers,
): HTMLElement {
  const target: Target = { kind: "section", name: row.name };
  const node = el("article", "row section-row");
  node.dataset.key = targetKey(target);
  if (board.selected && targetKey(board.selected) === targetKey(target)) {
    node.classList.add("selected");
  }
  if (board.pendingFor(target)) node.classList.add("pending");
  node.addEventListener("click", () => handlers.select(target));

  const head = el("div", "row-head");
  head.appendChild(el("span", "row-name", row.name));
  head.appendChild(el("span", "row-meta", `${row.frequency} sentences`));
  head.appendChild(verdictBadge(row.verdict));
  head.appendChild(verdictButtons(target, row.verdict, handlers));
  node.appendChild(head);

  const samples = el("ul", "samples");
  for (const text of row.sample_sentences) {
    samples.appendChild(el("li", "sample", text));
  }
  node.appendChild(samples);
  return node;
}

function clusterCardNode(
  card: ClusterCard,
  board: TriageBoard,
  handlers: Handlers,
): HTMLElement {
  const target: Target = { kind: "cluster", index: card.cluster_index };
  const node = el("article", "row cluster-card");
  node.dataset.key = targetKey(target);
  if (board.selected && targetKey(board.selected) === targetKey(target)) {
    node.classList.add("selected");
  }
  if (board.pendingFor(target)) node.classList.add("pending");
  node.addEventListener("click", () => handlers.select(target));

  const head = el("div", "row-head");
  head.appendChild(el("span", "row-name", `cluster ${card.cluster_index}`));
  head.appendChild(el("span", "row-meta", `${card.size} sentences`));
  head.appendChild(verdictBadge(card.verdict));
  head.appendChild(verdictButtons(target, card.verdict, handlers));
  node.appendChild(head);

  const chips = el("div", "section-chips");
  for (const [name, count] of Object.entries(card.top_sections)) {
    chips.appendChild(el("span", "chip", `${name} ×${count}`));
  }
  node.appendChild(chips);

  const samples = el("ul", "samples");
  for (const ex of card.exemplars) {
    samples.appendChild(el("li", "sample", ex.text ?? `${ex.sentence_id} (${ex.class_id})`));
  }
  node.appendChild(samples);
  return node;
}

function bannerNode(board: TriageBoard, handlers: Handlers): HTMLElement | null {
  const banner = board.banner;
  if (!banner) return null;
  const node = el("div", `banner banner-${banner.kind}`);
  const label =
    banner.kind === "conflict"
      ? "stale write rejected"
      : banner.kind === "offline"
        ? "connection lost"
        : "request failed";
  node.appendChild(el("strong", "banner-label", label));
  node.appendChild(el("span", "banner-message", banner.message));
  if (banner.kind === "offline") {
    const retry = el("button", "banner-action", "retry");
    retry.type = "button";
    retry.addEventListener("click", () => handlers.refresh());
    node.appendChild(retry);
  }
  const dismiss = el("button", "banner-action", "dismiss");
  dismiss.type = "button";
  dismiss.addEventListener("click", () => handlers.dismissBanner());
  node.appendChild(dismiss);
  return node;
}

function toolbar(board: TriageBoard, handlers: Handlers): HTMLElement {
  const bar = el("div", "toolbar");

  const search = el("input", "search");
  search.type = "search";
  search.id = "search";
  search.placeholder = "search text, sections, classes… ( / )";
  search.value = board.query;
  search.addEventListener("input", () => handlers.setQuery(search.value));
  bar.appendChild(search);

  const filter = el("select", "filter");
  filter.id = "verdict-filter";
  for (const value of ["all", ...VERDICTS]) {
    const option = el("option", undefined, value);
    option.value = value;
    if (value === board.verdictFilter) option.selected = true;
    filter.appendChild(option);
  }
  filter.addEventListener("change", () => handlers.setFilter(filter.value as VerdictFilter));
  bar.appendChild(filter);

  const refresh = el("button", "toolbar-button", "refresh (g)");
  refresh.type = "button";
  refresh.id = "refresh";
  refresh.addEventListener("click", () => handlers.refresh());
  bar.appendChild(refresh);

  const recompute = el("button", "toolbar-button primary", "recompute (r)");
  recompute.type = "button";
  recompute.id = "recompute";
  if (!board.canRecompute()) {
    recompute.disabled = true;
    recompute.title = "mark at least one section or cluster visual first";
  } else {
    recompute.title = "re-run sentence filtering with the current labels";
  }
  recompute.addEventListener("click", () => handlers.recompute());
  bar.appendChild(recompute);

  return bar;
}

function progressNode(board: TriageBoard): HTMLElement {
  const { sections, clusters } = board.progress();
  const node = el("div", "progress");
  node.appendChild(
    el("span", "progress-part", `sections ${sections.labeled}/${sections.total}`),
  );
  node.appendChild(
    el("span", "progress-part", `clusters ${clusters.labeled}/${clusters.total}`),
  );
  return node;
}

function recomputeSummary(board: TriageBoard): HTMLElement | null {
  const report = board.lastRecompute;
  if (!report) return null;
  const node = el("section", "recompute-summary");
  node.appendChild(el("h2", undefined, "last recompute"));
  const table = el("table");
  const head = el("tr");
  for (const label of ["mode", "kept", "retention", "fallback classes"]) {
    head.appendChild(el("th", undefined, label));
  }
  table.appendChild(head);
  for (const [mode, stats] of Object.entries(report.modes)) {
    const tr = el("tr");
    tr.appendChild(el("td", "mode-name", mode));
    tr.appendChild(el("td", undefined, `${stats.kept}/${stats.total}`));
    tr.appendChild(el("td", undefined, `${(stats.retention * 100).toFixed(1)}%`));
    tr.appendChild(
      el(
        "td",
        "fallback",
        stats.fallback_classes.length > 0 ? stats.fallback_classes.join(", ") : "—",
      ),
    );
    table.appendChild(tr);
  }
  node.appendChild(table);
  return node;
}

/** Rebuild the whole app under `root` from the board state. */
export function render(root: HTMLElement, board: TriageBoard, handlers: Handlers): void {
  root.textContent = "";

  const header = el("header", "app-header");
  const title = el("div", "title-block");
  title.appendChild(el("h1", undefined, "visex triage"));
  title.appendChild(
    el("span", "revision", board.loaded ? `revision ${board.revision}` : "loading…"),
  );
  header.appendChild(title);
  header.appendChild(progressNode(board));
  header.appendChild(toolbar(board, handlers));
  root.appendChild(header);

  const banner = bannerNode(board, handlers);
  if (banner) root.appendChild(banner);

  const main = el("main", "panels");

  const sectionsPanel = el("section", "panel sections-panel");
  sectionsPanel.appendChild(el("h2", undefined, "sections"));
  const sectionRows = board.visibleSections();
  if (sectionRows.length === 0) {
    sectionsPanel.appendChild(el("p", "empty", "no sections match"));
  }
  for (const row of sectionRows) {
    sectionsPanel.appendChild(sectionRow(row, board, handlers));
  }
  main.appendChild(sectionsPanel);

  const clustersPanel = el("section", "panel clusters-panel");
  clustersPanel.appendChild(el("h2", undefined, "clusters"));
  const cards = board.visibleClusters();
  if (board.clusters.length === 0) {
    clustersPanel.appendChild(
      el("p", "empty", "no cluster model loaded — section labels only"),
    );
  } else if (cards.length === 0) {
    clustersPanel.appendChild(el("p", "empty", "no clusters match"));
  }
  for (const card of cards) {
    clustersPanel.appendChild(clusterCardNode(card, board, handlers));
  }
  main.appendChild(clustersPanel);

  root.appendChild(main);

  const summary = recomputeSummary(board);
  if (summary) root.appendChild(summary);

  const help = el("footer", "help");
  help.textContent =
    "keys: j/k move · v visual · n nonvisual · u unlabeled · r recompute · g refresh · / search";
  root.appendChild(help);
}
