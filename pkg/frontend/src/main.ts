/**
 * Bootstrap: load config.json (API base URL, optional tile URL), create a
 * session, and wire the map pane and panels to one store.
 */

import { ApiClient } from "./api";
import { MapPane, fitViewport } from "./map";
import { Panels } from "./panels";
import { regionBounds, Store, initialState } from "./state";
import { Workbench } from "./workbench";

interface AppConfig {
  apiBaseUrl: string;
  tileUrl?: string;
}

async function loadConfig(): Promise<AppConfig> {
  const response = await fetch("./config.json");
  if (!response.ok) {
    throw new Error("config.json missing next to index.html");
  }
  return (await response.json()) as AppConfig;
}

async function start(): Promise<void> {
  const config = await loadConfig();
  const api = new ApiClient(config.apiBaseUrl);
  const store = new Store(initialState());
  const workbench = new Workbench(api, store);

  const canvas = document.getElementById("map") as HTMLCanvasElement;
  const pane = new MapPane(
    canvas,
    store.get().viewport,
    {
      onDrawComplete: (rings) => {
        const role = (document.getElementById("draw-role") as HTMLSelectElement).value as
          | "query"
          | "reference";
        void workbench.setRegion(role, rings);
      },
      onViewportChange: (viewport) => store.update((s) => ({ ...s, viewport })),
    },
    config.tileUrl ?? "",
  );

  store.subscribe((state) => {
    pane.setContent(state.regions, state.overlays);
  });

  document.getElementById("draw-start")!.addEventListener("click", () => {
    const role = (document.getElementById("draw-role") as HTMLSelectElement).value as
      | "query"
      | "reference";
    pane.startDraw(role);
  });
  document.getElementById("draw-finish")!.addEventListener("click", () => pane.finishDraw());
  document.getElementById("zoom-regions")!.addEventListener("click", () => {
    const bounds = regionBounds(store.get().regions);
    if (bounds) pane.setViewport(fitViewport(pane.getViewport(), bounds));
  });

  const upload = document.getElementById("region-upload") as HTMLInputElement;
  upload.addEventListener("change", async () => {
    const file = upload.files?.[0];
    if (!file) return;
    const role = (document.getElementById("draw-role") as HTMLSelectElement).value as
      | "query"
      | "reference";
    try {
      const geojson = JSON.parse(await file.text());
      const { geoJsonToRings } = await import("./workbench");
      await workbench.setRegion(role, geoJsonToRings(geojson));
      const bounds = regionBounds(store.get().regions);
      if (bounds) pane.setViewport(fitViewport(pane.getViewport(), bounds));
    } catch (error) {
      // surface the server's message verbatim (e.g. "polygonal geometry required")
      window.alert((error as Error).message);
    }
  });

  new Panels(document.getElementById("panels")!, workbench);
  await workbench.createSession();
  pane.repaint();
}

void start();
