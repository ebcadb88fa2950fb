/** DOM-free display math plus canvas painting helpers.
 *
 * The raster is drawn at an integer zoom with nearest-neighbor scaling, so a
 * sim pixel (x, y) covers display pixels [x*z, (x+1)*z) x [y*z, (y+1)*z).
 * Graph markers are placed at exactly the served centroids mapped through
 * that transform — no re-measurement client-side.
 */
import type { GraphNode, Handshake, SceneGraphDoc } from "./protocol.js";

export interface Marker {
  nodeId: number;
  classId: number;
  /** display px of the served centroid (pixel-center convention) */
  x: number;
  y: number;
  /** display px spread ellipse semi-axes */
  rx: number;
  ry: number;
  /** display px flow arrow end point */
  fx: number;
  fy: number;
  label: string;
}

/** Map a sim-pixel coordinate (pixel-center convention) to display px. */
export function toDisplay(px: number, py: number, zoom: number): [number, number] {
  return [(px + 0.5) * zoom, (py + 0.5) * zoom];
}

/** Inverse of toDisplay. */
export function toRaster(dx: number, dy: number, zoom: number): [number, number] {
  return [dx / zoom - 0.5, dy / zoom - 0.5];
}

/** Display-pixel drag -> sim-unit tip delta, using handshake geometry. */
export function dragToSimDelta(
  dxPx: number,
  dyPx: number,
  zoom: number,
  handshake: Handshake,
): [number, number] {
  return [dxPx / zoom / handshake.px_per_unit, dyPx / zoom / handshake.px_per_unit];
}

export function markersFor(
  graph: SceneGraphDoc,
  zoom: number,
  classNames: Record<string, string>,
  flowScale = 4,
): Marker[] {
  return graph.nodes.map((n: GraphNode) => {
    const [x, y] = toDisplay(n.centroid[0], n.centroid[1], zoom);
    return {
      nodeId: n.node_id,
      classId: n.class_id,
      x,
      y,
      rx: n.spread[0] * zoom,
      ry: n.spread[1] * zoom,
      fx: x + n.mean_flow[0] * zoom * flowScale,
      fy: y + n.mean_flow[1] * zoom * flowScale,
      label: classNames[String(n.class_id)] ?? String(n.class_id),
    };
  });
}

// ----------------------------------------------------------- canvas painting

type Ctx2D = CanvasRenderingContext2D;

/** Paint a base64 PNG raster at integer zoom, nearest-neighbor. */
export function drawRasterPng(
  ctx: Ctx2D,
  pngB64: string,
  zoom: number,
): Promise<void> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => {
      ctx.imageSmoothingEnabled = false;
      ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
      ctx.drawImage(img, 0, 0, img.width * zoom, img.height * zoom);
      resolve();
    };
    img.onerror = reject;
    img.src = "data:image/png;base64," + pngB64;
  });
}

export function drawMarkers(ctx: Ctx2D, markers: Marker[]): void {
  ctx.save();
  for (const m of markers) {
    ctx.strokeStyle = "rgba(255,255,255,0.85)";
    ctx.lineWidth = 1;
    ctx.beginPath();
    ctx.ellipse(m.x, m.y, Math.max(m.rx, 1), Math.max(m.ry, 1), 0, 0, 2 * Math.PI);
    ctx.stroke();
    ctx.fillStyle = "#ff5050";
    ctx.beginPath();
    ctx.arc(m.x, m.y, 2.5, 0, 2 * Math.PI);
    ctx.fill();
    ctx.strokeStyle = "#50c8ff";
    ctx.beginPath();
    ctx.moveTo(m.x, m.y);
    ctx.lineTo(m.fx, m.fy);
    ctx.stroke();
    ctx.fillStyle = "rgba(255,255,255,0.9)";
    ctx.font = "10px sans-serif";
    ctx.fillText(m.label, m.x + 4, m.y - 4);
  }
  ctx.restore();
}

export function drawGhost(
  ctx: Ctx2D,
  tipSim: [number, number],
  orientation: number,
  handshake: Handshake,
  zoom: number,
): void {
  // sim -> raster px (same mapping as the server's coordinate map)
  const k = handshake.px_per_unit;
  const px = tipSim[0] * k + handshake.width / 2 - 0.5;
  const py = tipSim[1] * k + handshake.height / 2 - 0.5;
  const [x, y] = toDisplay(px, py, zoom);
  ctx.save();
  ctx.globalAlpha = 0.5;
  ctx.strokeStyle = "#ffd24d";
  ctx.setLineDash([4, 3]);
  ctx.beginPath();
  ctx.arc(x, y, 6, 0, 2 * Math.PI);
  ctx.moveTo(x, y);
  ctx.lineTo(x + 18 * Math.cos(orientation), y + 18 * Math.sin(orientation));
  ctx.stroke();
  ctx.restore();
}
