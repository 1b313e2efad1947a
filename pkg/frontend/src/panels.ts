/**
 * Side-panel DOM: alias/feature editors with parse-offset underlines,
 * the run panel, layer list with visibility toggles and statistics, and
 * template import/export. Panels re-render from store snapshots; all
 * mutations go through the Workbench action layer.
 */

import type { Workbench } from "./workbench";
import { runDisabledReason, WorkbenchState } from "./state";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  if (text) node.textContent = text;
  return node;
}

/** Mark the character the server's byte offset points at. */
export function underlineError(text: string, offset: number | null): HTMLElement {
  const wrap = el("span", { class: "dsl-error-text" });
  if (offset === null || offset >= text.length) {
    wrap.textContent = text;
    return wrap;
  }
  wrap.append(
    el("span", {}, text.slice(0, offset)),
    el("span", { class: "dsl-error-caret" }, text.slice(offset, offset + 1)),
    el("span", {}, text.slice(offset + 1)),
  );
  return wrap;
}

export class Panels {
  private readonly root: HTMLElement;
  private readonly workbench: Workbench;
  private aliasInput!: HTMLInputElement;
  private featureInput!: HTMLInputElement;

  constructor(root: HTMLElement, workbench: Workbench) {
    this.root = root;
    this.workbench = workbench;
    workbench.store.subscribe((state) => this.render(state));
    this.render(workbench.state);
  }

  render(state: WorkbenchState): void {
    const aliasDraft = this.aliasInput?.value ?? "";
    const featureDraft = this.featureInput?.value ?? "";
    this.root.replaceChildren(
      this.sessionSection(state),
      this.regionSection(state),
      this.aliasSection(state, aliasDraft),
      this.featureSection(state, featureDraft),
      this.runSection(state),
      this.templateSection(state),
    );
  }

  private sessionSection(state: WorkbenchState): HTMLElement {
    const section = el("section", { class: "panel", id: "panel-session" });
    section.append(el("h3", {}, "Session"));
    section.append(
      el("div", { class: "session-id" }, state.sessionId ?? "no session"),
      el("div", { class: "state-hash" }, state.stateHash ? `state ${state.stateHash.slice(0, 12)}` : ""),
    );
    const resolution = el("input", {
      id: "resolution-input",
      type: "number",
      placeholder: "target resolution (CRS units/px)",
    });
    const apply = el("button", { id: "resolution-apply" }, "set resolution");
    apply.addEventListener("click", () => {
      const value = Number(resolution.value);
      if (value > 0) void this.workbench.setTargetResolution(value);
    });
    section.append(resolution, apply);
    return section;
  }

  private regionSection(state: WorkbenchState): HTMLElement {
    const section = el("section", { class: "panel", id: "panel-regions" });
    section.append(el("h3", {}, "Regions"));
    for (const region of state.regions) {
      const row = el("div", { class: "region-row" });
      row.append(el("span", { class: `badge badge-${region.role}` }, region.role));
      const drop = el("button", {}, "remove");
      drop.addEventListener("click", () => void this.workbench.removeRegion(region.role));
      row.append(drop);
      section.append(row);
    }
    return section;
  }

  private aliasSection(state: WorkbenchState, draft: string): HTMLElement {
    const section = el("section", { class: "panel", id: "panel-aliases" });
    section.append(el("h3", {}, "Aliases"));
    for (const alias of state.aliases) {
      const row = el("div", { class: "alias-row", "data-alias": alias.name });
      row.append(el("code", {}, alias.canonical));
      const toggle = el("button", { class: "visibility" }, alias.visible ? "hide" : "show");
      toggle.addEventListener("click", () => void this.workbench.toggleLayer(alias.name));
      row.append(toggle);
      const drop = el("button", {}, "remove");
      drop.addEventListener("click", () => void this.workbench.removeAlias(alias.name));
      row.append(drop);
      if (alias.stats) {
        row.append(
          el(
            "div",
            { class: "stats" },
            `n=${alias.stats.count} range=[${alias.stats.min.toPrecision(4)}, ` +
              `${alias.stats.max.toPrecision(4)}] mean=${alias.stats.mean.toPrecision(4)}`,
          ),
          sparkline(alias.stats.histogram),
        );
      }
      section.append(row);
    }
    this.aliasInput = el("input", {
      id: "alias-input",
      placeholder: "name:product:band:DD/MM/YYYY:DD/MM/YYYY:AGG",
    });
    this.aliasInput.value = draft;
    const add = el("button", { id: "alias-add" }, "add alias");
    add.addEventListener("click", () => {
      void this.workbench.addAlias(this.aliasInput.value).then((ok) => {
        if (ok) this.aliasInput.value = "";
      });
    });
    section.append(this.aliasInput, add);
    if (state.editorError?.scope === "alias") {
      const box = el("div", { class: "error-box", id: "alias-error" });
      box.append(underlineError(draft, state.editorError.offset));
      box.append(el("div", { class: "error-message" }, state.editorError.message));
      section.append(box);
    }
    return section;
  }

  private featureSection(state: WorkbenchState, draft: string): HTMLElement {
    const section = el("section", { class: "panel", id: "panel-features" });
    section.append(el("h3", {}, "Features"));
    for (const feature of state.features) {
      const row = el("div", { class: "feature-row", "data-feature": feature.name });
      row.append(el("code", {}, feature.canonical));
      const toggle = el("button", { class: "visibility" }, feature.visible ? "hide" : "show");
      toggle.addEventListener("click", () => void this.workbench.toggleLayer(feature.name));
      row.append(toggle);
      const drop = el("button", {}, "remove");
      drop.addEventListener("click", () => void this.workbench.removeFeature(feature.name));
      row.append(drop);
      section.append(row);
    }
    this.featureInput = el("input", { id: "feature-input", placeholder: "name:expression" });
    this.featureInput.value = draft;
    const add = el("button", { id: "feature-add" }, "add feature");
    add.addEventListener("click", () => {
      void this.workbench.addFeature(this.featureInput.value).then((ok) => {
        if (ok) this.featureInput.value = "";
      });
    });
    section.append(this.featureInput, add);
    if (state.editorError?.scope === "feature") {
      const box = el("div", { class: "error-box", id: "feature-error" });
      box.append(underlineError(draft, state.editorError.offset));
      box.append(el("div", { class: "error-message" }, state.editorError.message));
      section.append(box);
    }
    return section;
  }

  private runSection(state: WorkbenchState): HTMLElement {
    const section = el("section", { class: "panel", id: "panel-run" });
    section.append(el("h3", {}, "Run"));

    const kind = el("select", { id: "op-kind" });
    kind.append(new Option("cluster", "cluster"), new Option("similarity", "similarity"));
    kind.value = state.operation.kind;
    kind.addEventListener("change", () => {
      if (kind.value === "cluster") {
        void this.workbench.setOperation({ kind: "cluster", k: 5, seed: 0 });
      } else {
        void this.workbench.setOperation({ kind: "similarity", metric: "euclidean", standardize: true });
      }
    });
    section.append(kind);

    if (state.operation.kind === "cluster") {
      const k = el("input", { id: "op-k", type: "number", min: "2" });
      k.value = String(state.operation.k);
      const seed = el("input", { id: "op-seed", type: "number" });
      seed.value = String(state.operation.seed);
      const sync = () =>
        void this.workbench.setOperation({
          kind: "cluster",
          k: Number(k.value) || 2,
          seed: Number(seed.value) || 0,
        });
      k.addEventListener("change", sync);
      seed.addEventListener("change", sync);
      section.append(el("label", {}, "k"), k, el("label", {}, "seed"), seed);
    } else {
      const metric = el("select", { id: "op-metric" });
      metric.append(
        new Option("euclidean"),
        new Option("manhattan"),
        new Option("cosine"),
      );
      metric.value = state.operation.metric;
      metric.addEventListener("change", () =>
        void this.workbench.setOperation({
          kind: "similarity",
          metric: metric.value as "euclidean" | "manhattan" | "cosine",
          standardize: true,
        }),
      );
      section.append(el("label", {}, "metric"), metric);
    }

    const reason = runDisabledReason(state);
    const run = el("button", { id: "run-button" }, "run") as HTMLButtonElement;
    if (reason) {
      run.disabled = true;
      run.title = reason;  // tooltip mirrors the server's 409 rule
    }
    run.addEventListener("click", () => void this.workbench.runOperation());
    section.append(run);
    if (reason) {
      section.append(el("div", { class: "run-reason" }, reason));
    }

    for (const job of state.jobs) {
      const row = el("div", { class: "job-row", "data-job": job.id });
      row.append(
        el("span", {}, `${job.kind} ${job.status} ${(job.progress * 100).toFixed(0)}%`),
      );
      if (job.error) row.append(el("span", { class: "job-error" }, job.error));
      if (job.status === "done") {
        const link = el("a", { href: this.workbench.downloadResultUrl(job.id) }, "result.tif");
        row.append(link);
      }
      section.append(row);
    }
    return section;
  }

  private templateSection(state: WorkbenchState): HTMLElement {
    const section = el("section", { class: "panel", id: "panel-template" });
    section.append(el("h3", {}, "Template"));
    const exportBtn = el("button", { id: "template-export" }, "export") as HTMLButtonElement;
    exportBtn.disabled = !state.complete;
    exportBtn.addEventListener("click", () => {
      void this.workbench.exportTemplate().then((doc) => {
        const blob = new Blob([JSON.stringify(doc, null, 2) + "\n"], { type: "application/json" });
        const a = el("a", { download: `${doc.name}.json` }) as HTMLAnchorElement;
        a.href = URL.createObjectURL(blob);
        a.click();
        URL.revokeObjectURL(a.href);
      });
    });
    const importInput = el("input", { id: "template-import", type: "file", accept: ".json" });
    importInput.addEventListener("change", async () => {
      const file = (importInput as HTMLInputElement).files?.[0];
      if (!file) return;
      const text = await file.text();
      let doc: unknown;
      try {
        doc = JSON.parse(text);
      } catch {
        window.alert("not a JSON file");
        return;
      }
      if (window.confirm("Importing replaces the whole session. Continue?")) {
        try {
          await this.workbench.importTemplate(doc);
        } catch (error) {
          window.alert(`import failed: ${(error as Error).message}`);
        }
      }
    });
    section.append(exportBtn, importInput);
    return section;
  }
}

function sparkline(histogram: number[]): HTMLElement {
  const wrap = el("div", { class: "sparkline" });
  const peak = Math.max(...histogram, 1);
  for (const count of histogram) {
    const bar = el("span", { class: "spark-bar" });
    bar.style.height = `${Math.round((count / peak) * 24)}px`;
    wrap.append(bar);
  }
  return wrap;
}
