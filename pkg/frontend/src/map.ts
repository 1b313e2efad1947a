/**
 * Map pane: a planar CRS viewport on a canvas with an optional raster tile
 * background (plain URL template) falling back to a blank graticule, region
 * outlines, PNG overlays, and a click-to-draw polygon tool.
 */

import type { Viewport, RegionEntry, OverlayEntry } from "./state";

export interface Projected {
  x: number;
  y: number;
}

export function worldToScreen(viewport: Viewport, x: number, y: number): Projected {
  return {
    x: viewport.widthPx / 2 + (x - viewport.centerX) / viewport.unitsPerPixel,
    y: viewport.heightPx / 2 - (y - viewport.centerY) / viewport.unitsPerPixel,
  };
}

export function screenToWorld(viewport: Viewport, px: number, py: number): Projected {
  return {
    x: viewport.centerX + (px - viewport.widthPx / 2) * viewport.unitsPerPixel,
    y: viewport.centerY - (py - viewport.heightPx / 2) * viewport.unitsPerPixel,
  };
}

export function viewportBbox(viewport: Viewport): [number, number, number, number] {
  const halfW = (viewport.widthPx / 2) * viewport.unitsPerPixel;
  const halfH = (viewport.heightPx / 2) * viewport.unitsPerPixel;
  return [
    viewport.centerX - halfW,
    viewport.centerY - halfH,
    viewport.centerX + halfW,
    viewport.centerY + halfH,
  ];
}

/** Fit the viewport to an extent with a small margin. */
export function fitViewport(
  viewport: Viewport,
  extent: [number, number, number, number],
): Viewport {
  const [minX, minY, maxX, maxY] = extent;
  const margin = 1.1;
  const upp = Math.max(
    ((maxX - minX) / viewport.widthPx) * margin,
    ((maxY - minY) / viewport.heightPx) * margin,
  );
  return {
    ...viewport,
    centerX: (minX + maxX) / 2,
    centerY: (minY + maxY) / 2,
    unitsPerPixel: upp > 0 ? upp : viewport.unitsPerPixel,
  };
}

/** Graticule line spacing: a 1/2/5 ladder close to ~120px apart. */
export function graticuleStep(unitsPerPixel: number, targetPx = 120): number {
  const raw = unitsPerPixel * targetPx;
  const power = Math.pow(10, Math.floor(Math.log10(raw)));
  for (const mult of [1, 2, 5, 10]) {
    if (power * mult >= raw) {
      return power * mult;
    }
  }
  return power * 10;
}

const ROLE_COLORS: Record<string, string> = {
  query: "#1f77b4",
  reference: "#d62728",
};

export interface MapCallbacks {
  onDrawComplete: (rings: Array<Array<[number, number]>>) => void;
  onViewportChange: (viewport: Viewport) => void;
}

export class MapPane {
  readonly canvas: HTMLCanvasElement;
  private viewport: Viewport;
  private regions: RegionEntry[] = [];
  private overlays: OverlayEntry[] = [];
  private images = new Map<string, HTMLImageElement>();
  private drawRole: "query" | "reference" | null = null;
  private drawVertices: Array<[number, number]> = [];
  private callbacks: MapCallbacks;
  private tileUrl: string;

  constructor(canvas: HTMLCanvasElement, viewport: Viewport, callbacks: MapCallbacks, tileUrl = "") {
    this.canvas = canvas;
    this.viewport = viewport;
    this.callbacks = callbacks;
    this.tileUrl = tileUrl;
    canvas.width = viewport.widthPx;
    canvas.height = viewport.heightPx;
    canvas.addEventListener("click", (e) => this.handleClick(e));
    canvas.addEventListener("dblclick", (e) => {
      e.preventDefault();
      this.finishDraw();
    });
    canvas.addEventListener("wheel", (e) => {
      e.preventDefault();
      const factor = e.deltaY > 0 ? 1.25 : 0.8;
      this.setViewport({ ...this.viewport, unitsPerPixel: this.viewport.unitsPerPixel * factor });
    });
  }

  setViewport(viewport: Viewport): void {
    this.viewport = viewport;
    this.callbacks.onViewportChange(viewport);
    this.repaint();
  }

  getViewport(): Viewport {
    return this.viewport;
  }

  setContent(regions: RegionEntry[], overlays: OverlayEntry[]): void {
    this.regions = regions;
    for (const overlay of overlays) {
      if (!this.images.has(overlay.imageUrl)) {
        const img = new Image();
        img.onload = () => this.repaint();
        img.src = overlay.imageUrl;
        this.images.set(overlay.imageUrl, img);
      }
    }
    this.overlays = overlays;
    this.repaint();
  }

  /** Arm the draw tool: subsequent clicks add vertices, double-click closes. */
  startDraw(role: "query" | "reference"): void {
    this.drawRole = role;
    this.drawVertices = [];
  }

  cancelDraw(): void {
    this.drawRole = null;
    this.drawVertices = [];
    this.repaint();
  }

  isDrawing(): boolean {
    return this.drawRole !== null;
  }

  private handleClick(e: MouseEvent): void {
    if (!this.drawRole) return;
    const rect = this.canvas.getBoundingClientRect();
    const world = screenToWorld(this.viewport, e.clientX - rect.left, e.clientY - rect.top);
    this.drawVertices.push([world.x, world.y]);
    this.repaint();
  }

  finishDraw(): void {
    if (!this.drawRole || this.drawVertices.length < 3) {
      return;
    }
    const rings = [this.drawVertices.slice()];
    this.drawRole = null;
    this.drawVertices = [];
    this.callbacks.onDrawComplete(rings);
  }

  repaint(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const { widthPx, heightPx } = this.viewport;
    ctx.clearRect(0, 0, widthPx, heightPx);
    ctx.fillStyle = "#fafaf8";
    ctx.fillRect(0, 0, widthPx, heightPx);
    this.paintGraticule(ctx);
    this.paintOverlays(ctx);
    this.paintRegions(ctx);
    this.paintDraft(ctx);
  }

  private paintGraticule(ctx: CanvasRenderingContext2D): void {
    const [minX, minY, maxX, maxY] = viewportBbox(this.viewport);
    const step = graticuleStep(this.viewport.unitsPerPixel);
    ctx.strokeStyle = "#ddd";
    ctx.lineWidth = 1;
    ctx.fillStyle = "#999";
    ctx.font = "10px sans-serif";
    for (let x = Math.ceil(minX / step) * step; x <= maxX; x += step) {
      const p = worldToScreen(this.viewport, x, 0);
      ctx.beginPath();
      ctx.moveTo(p.x, 0);
      ctx.lineTo(p.x, this.viewport.heightPx);
      ctx.stroke();
      ctx.fillText(String(Math.round(x)), p.x + 2, 12);
    }
    for (let y = Math.ceil(minY / step) * step; y <= maxY; y += step) {
      const p = worldToScreen(this.viewport, 0, y);
      ctx.beginPath();
      ctx.moveTo(0, p.y);
      ctx.lineTo(this.viewport.widthPx, p.y);
      ctx.stroke();
      ctx.fillText(String(Math.round(y)), 2, p.y - 2);
    }
  }

  private paintOverlays(ctx: CanvasRenderingContext2D): void {
    for (const overlay of this.overlays) {
      const img = this.images.get(overlay.imageUrl);
      if (!img || !img.complete) continue;
      const [minX, minY, maxX, maxY] = overlay.extent;
      const tl = worldToScreen(this.viewport, minX, maxY);
      const br = worldToScreen(this.viewport, maxX, minY);
      ctx.globalAlpha = 0.8;
      ctx.drawImage(img, tl.x, tl.y, br.x - tl.x, br.y - tl.y);
      ctx.globalAlpha = 1.0;
    }
  }

  private paintRegions(ctx: CanvasRenderingContext2D): void {
    for (const region of this.regions) {
      ctx.strokeStyle = ROLE_COLORS[region.role] ?? "#333";
      ctx.lineWidth = 2;
      for (const ring of region.rings) {
        ctx.beginPath();
        ring.forEach(([x, y], i) => {
          const p = worldToScreen(this.viewport, x, y);
          if (i === 0) ctx.moveTo(p.x, p.y);
          else ctx.lineTo(p.x, p.y);
        });
        ctx.closePath();
        ctx.stroke();
      }
    }
  }

  private paintDraft(ctx: CanvasRenderingContext2D): void {
    if (!this.drawRole || this.drawVertices.length === 0) return;
    ctx.strokeStyle = ROLE_COLORS[this.drawRole];
    ctx.setLineDash([4, 4]);
    ctx.beginPath();
    this.drawVertices.forEach(([x, y], i) => {
      const p = worldToScreen(this.viewport, x, y);
      if (i === 0) ctx.moveTo(p.x, p.y);
      else ctx.lineTo(p.x, p.y);
    });
    ctx.stroke();
    ctx.setLineDash([]);
  }
}
