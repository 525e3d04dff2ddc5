// DOM rendering. Pure functions of the store state: the dynamic regions are
// re-rendered wholesale, so what is on screen is exactly what the state says.

import { UiState } from "./state.js";

export const UNKNOWN_LABEL = "(inconnu)";

export interface ViewHandlers {
  onEvidenceChange: (variable: string, label: string | null) => void;
  onPreviewEnter: (variable: string, label: string) => void;
  onPreviewLeave: () => void;
  onClearAll: () => void;
}

export function buildSkeleton(root: HTMLElement): void {
  root.innerHTML = `
    <header>
      <h1>Aide au diagnostic</h1>
      <div id="banner" class="banner" hidden></div>
      <div id="error" class="error" hidden></div>
    </header>
    <main>
      <section id="evidence-panel">
        <h2>Observations</h2>
        <button id="clear-all" type="button">Tout effacer</button>
        <div id="evidence-form"></div>
      </section>
      <section id="posterior-panel">
        <h2 id="chart-title"></h2>
        <div id="prediction"></div>
        <div id="chart"></div>
        <h2>Prochaine question</h2>
        <ol id="voi"></ol>
      </section>
    </main>
  `;
}

export function render(root: HTMLElement, state: UiState, handlers: ViewHandlers): void {
  renderBanner(root, state);
  renderForm(root, state, handlers);
  renderChart(root, state);
  renderVoi(root, state);
}

function renderBanner(root: HTMLElement, state: UiState): void {
  const banner = root.querySelector<HTMLElement>("#banner")!;
  banner.hidden = !state.contradiction;
  banner.textContent = state.contradiction
    ? "Observations contradictoires : la combinaison saisie est impossible selon le modèle. Dernière distribution cohérente affichée."
    : "";
  const error = root.querySelector<HTMLElement>("#error")!;
  error.hidden = state.error === null;
  error.textContent = state.error ?? "";
}

function renderForm(root: HTMLElement, state: UiState, handlers: ViewHandlers): void {
  const form = root.querySelector<HTMLElement>("#evidence-form")!;
  const schema = state.schema;
  if (schema === null) {
    form.textContent = "Chargement du modèle…";
    return;
  }
  form.innerHTML = "";
  for (const variable of schema.variables) {
    if (variable.name === schema.decision) {
      continue;
    }
    const row = document.createElement("div");
    row.className = "evidence-row";
    row.dataset.variable = variable.name;

    const label = document.createElement("label");
    label.textContent = variable.name;
    label.htmlFor = `ev-${variable.name}`;
    row.appendChild(label);

    const select = document.createElement("select");
    select.id = `ev-${variable.name}`;
    const unknown = document.createElement("option");
    unknown.value = "";
    unknown.textContent = UNKNOWN_LABEL;
    select.appendChild(unknown);
    for (const stateLabel of variable.states) {
      const option = document.createElement("option");
      option.value = stateLabel;
      option.textContent = stateLabel;
      select.appendChild(option);
    }
    select.value = state.evidence[variable.name] ?? "";
    select.addEventListener("change", () => {
      handlers.onEvidenceChange(variable.name, select.value === "" ? null : select.value);
    });
    row.appendChild(select);

    // hover chips: transient what-if without committing evidence
    const chips = document.createElement("span");
    chips.className = "chips";
    for (const stateLabel of variable.states) {
      const chip = document.createElement("button");
      chip.type = "button";
      chip.className = "chip";
      chip.textContent = stateLabel;
      chip.addEventListener("pointerenter", () =>
        handlers.onPreviewEnter(variable.name, stateLabel),
      );
      chip.addEventListener("pointerleave", () => handlers.onPreviewLeave());
      chip.addEventListener("click", () => {
        handlers.onPreviewLeave();
        handlers.onEvidenceChange(variable.name, stateLabel);
      });
      chips.appendChild(chip);
    }
    row.appendChild(chips);
    form.appendChild(row);
  }

  const clear = root.querySelector<HTMLButtonElement>("#clear-all")!;
  clear.onclick = () => handlers.onClearAll();
}

function renderChart(root: HTMLElement, state: UiState): void {
  const chart = root.querySelector<HTMLElement>("#chart")!;
  const title = root.querySelector<HTMLElement>("#chart-title")!;
  const predictionEl = root.querySelector<HTMLElement>("#prediction")!;
  chart.innerHTML = "";

  const previewing = state.preview !== null;
  const doc = previewing ? state.preview!.doc : state.diagnosis;
  if (doc === null) {
    title.textContent = "Distribution du nœud décision";
    predictionEl.textContent = "";
    return;
  }
  title.textContent = previewing
    ? `Distribution (hypothèse : ${state.preview!.variable} = ${state.preview!.label})`
    : "Distribution du nœud décision";
  predictionEl.textContent =
    !previewing && state.diagnosis !== null
      ? `Diagnostic le plus probable : ${state.diagnosis.prediction}`
      : "";

  chart.classList.toggle("preview", previewing);
  doc.states.forEach((stateLabel, k) => {
    const rowEl = document.createElement("div");
    rowEl.className = "bar-row";
    rowEl.dataset.state = stateLabel;

    const name = document.createElement("span");
    name.className = "bar-name";
    name.textContent = stateLabel;
    rowEl.appendChild(name);

    const track = document.createElement("span");
    track.className = "bar-track";
    const bar = document.createElement("span");
    bar.className = "bar";
    bar.style.width = `${(doc.probs[k] * 100).toFixed(2)}%`;
    track.appendChild(bar);
    rowEl.appendChild(track);

    const value = document.createElement("span");
    value.className = "bar-value";
    value.textContent = doc.probs[k].toFixed(3);
    rowEl.appendChild(value);

    chart.appendChild(rowEl);
  });
}

function renderVoi(root: HTMLElement, state: UiState): void {
  const list = root.querySelector<HTMLElement>("#voi")!;
  list.innerHTML = "";
  if (state.diagnosis === null) {
    return;
  }
  for (const entry of state.diagnosis.voi.slice(0, 8)) {
    const item = document.createElement("li");
    item.dataset.variable = entry.variable;
    item.textContent = `${entry.variable} — réduction d'entropie attendue ${entry.score.toFixed(3)}`;
    list.appendChild(item);
  }
}
