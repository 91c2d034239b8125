// DOM rendering of the four panels: operator tree, impacted references,
// recommendations, and the highlighted source of the actionable entity.

import { Candidate, PendingReference, TreeNode } from "./api.js";
import {
  AppState,
  SessionController,
  Store,
  referencesOf,
  splitHighlight,
  statusIcon,
} from "./state.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export function mountApp(root: HTMLElement, controller: SessionController): void {
  const store: Store = controller.store;

  const setup = el("section", "setup");
  const dumpInput = el("textarea", "dump-input");
  dumpInput.placeholder = "Paste the schema dump (CREATE TABLE / VIEW / FUNCTION ...)";
  dumpInput.rows = 6;
  const startBtn = el("button", "", "Start session");
  const opInput = el("textarea", "ops-input");
  opInput.placeholder = '[{"op": "RenameColumn", "target": "public.person.uid", "args": {"new_name": "login"}}]';
  opInput.rows = 3;
  const addBtn = el("button", "", "Add operators");
  addBtn.disabled = true;
  setup.append(dumpInput, startBtn, opInput, addBtn);

  const errorBar = el("div", "error-bar");
  const panels = el("div", "panels");
  const treePanel = el("section", "panel tree-panel");
  const refsPanel = el("section", "panel refs-panel");
  const recsPanel = el("section", "panel recs-panel");
  const sourcePanel = el("section", "panel source-panel");
  panels.append(treePanel, refsPanel, recsPanel, sourcePanel);

  const patchBar = el("section", "patch-bar");
  const generateBtn = el("button", "", "Generate patch");
  generateBtn.disabled = true;
  const downloadLink = el("a", "download hidden", "Download patch.sql");
  const patchView = el("pre", "patch-view");
  patchBar.append(generateBtn, downloadLink, patchView);

  root.append(setup, errorBar, panels, patchBar);

  startBtn.addEventListener("click", () => {
    void controller.start(dumpInput.value);
  });
  addBtn.addEventListener("click", () => {
    let ops: unknown;
    try {
      ops = JSON.parse(opInput.value);
    } catch {
      store.set({ error: "operators must be a JSON array" });
      return;
    }
    void controller.addOperators(Array.isArray(ops) ? ops : [ops]);
  });
  generateBtn.addEventListener("click", () => {
    void controller.generatePatch();
  });

  function renderTreeNode(node: TreeNode, state: AppState): HTMLElement {
    const item = el("div", "tree-node");
    const head = el("button", "tree-label", `${statusIcon(node.status)} ${node.label}`);
    if (node.id === state.selectedOperator) {
      head.classList.add("selected");
    }
    head.addEventListener("click", () => controller.selectOperator(node.id));
    item.append(head);
    for (const child of node.children) {
      const sub = renderTreeNode(child, state);
      sub.classList.add("indented");
      item.append(sub);
    }
    return item;
  }

  function renderReferences(state: AppState): void {
    refsPanel.textContent = "";
    refsPanel.append(el("h2", "", "Impacted references"));
    const refs: PendingReference[] = referencesOf(state.tree, state.selectedOperator);
    if (refs.length === 0) {
      refsPanel.append(el("p", "empty", "No impacted references for this operator."));
      return;
    }
    for (const ref of refs) {
      const row = el(
        "button",
        "ref-row",
        `${statusIcon(ref.status)} ${ref.key} (${ref.subset})`,
      );
      if (ref.key === state.selectedReference) {
        row.classList.add("selected");
      }
      row.addEventListener("click", () => {
        void controller.selectReference(ref.key);
      });
      refsPanel.append(row);
    }
  }

  function renderRecommendations(state: AppState): void {
    recsPanel.textContent = "";
    recsPanel.append(el("h2", "", "Recommendations"));
    const detail = state.detail;
    if (detail === null) {
      recsPanel.append(el("p", "empty", "Select a reference to see its candidates."));
      return;
    }
    for (const candidate of detail.candidates) {
      const card = el("div", "candidate");
      card.append(el("p", "", `${candidate.kind}: ${candidate.description}`));
      const use = el("button", "", "Use this operator");
      use.disabled = detail.status === "decided";
      use.addEventListener("click", () => {
        void controller.choose(candidate as Candidate);
      });
      card.append(use);
      if (detail.chosen === candidate.id) {
        card.classList.add("chosen");
      }
      recsPanel.append(card);
    }
  }

  function renderSource(state: AppState): void {
    sourcePanel.textContent = "";
    sourcePanel.append(el("h2", "", "Source"));
    const detail = state.detail;
    if (detail === null || detail.source === undefined || detail.highlight === undefined) {
      sourcePanel.append(el("p", "empty", "The actionable entity's source appears here."));
      return;
    }
    sourcePanel.append(el("p", "actionable", detail.actionable ?? ""));
    const pre = el("pre", "source-text");
    const { before, mark, after } = splitHighlight(detail.source, detail.highlight);
    pre.append(document.createTextNode(before));
    const marked = el("mark", "", mark);
    pre.append(marked, document.createTextNode(after));
    sourcePanel.append(pre);
  }

  function render(state: AppState): void {
    errorBar.textContent = state.error ?? "";
    errorBar.classList.toggle("visible", state.error !== null);
    addBtn.disabled = state.sessionId === null;
    generateBtn.disabled = state.tree === null || !state.tree.closed;

    treePanel.textContent = "";
    treePanel.append(el("h2", "", "Operators"));
    if (state.tree === null) {
      treePanel.append(el("p", "empty", "Start a session to plan an evolution."));
    } else {
      for (const rootNode of state.tree.roots) {
        treePanel.append(renderTreeNode(rootNode, state));
      }
      treePanel.append(
        el("p", "pending-count", `${state.tree.pending} pending decision(s)`),
      );
    }
    renderReferences(state);
    renderRecommendations(state);
    renderSource(state);

    patchView.textContent = state.patch?.sql ?? "";
    if (state.patch !== null) {
      const blob = new Blob([state.patch.sql], { type: "application/sql" });
      downloadLink.setAttribute("href", URL.createObjectURL(blob));
      downloadLink.setAttribute("download", "patch.sql");
      downloadLink.classList.remove("hidden");
    } else {
      downloadLink.classList.add("hidden");
    }
  }

  store.subscribe(render);
  render(store.get());
}
