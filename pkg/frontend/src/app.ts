import { DiagnosisApi } from "./api.js";
import { DiagnosisStore, StoreOptions } from "./state.js";
import { buildSkeleton, render, ViewHandlers } from "./view.js";

export interface App {
  store: DiagnosisStore;
  client: DiagnosisApi;
  ready: Promise<void>;
}

/** Wire the store to the DOM under `root` and start a session. */
export function createApp(
  root: HTMLElement,
  client: DiagnosisApi,
  options: StoreOptions = {},
): App {
  const store = new DiagnosisStore(client, options);
  buildSkeleton(root);

  const handlers: ViewHandlers = {
    onEvidenceChange: (variable, label) => store.setEvidence(variable, label),
    onPreviewEnter: (variable, label) => {
      void store.previewEvidence(variable, label);
    },
    onPreviewLeave: () => store.clearPreview(),
    onClearAll: () => {
      void store.clearAll();
    },
  };

  store.subscribe((state) => render(root, state, handlers));
  const ready = store.init();
  return { store, client, ready };
}
