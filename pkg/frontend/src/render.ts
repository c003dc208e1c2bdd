/**
 * Canvas drawing for the annotation view. Everything drawn here is a
 * server-provided pixel coordinate (or a user click); the canvas runs at
 * the image's native resolution so no rescaling of values is involved.
 */

import { CORNER_LABELS } from './annotation.js';
import { cssDepthColor, normalizeDepths } from './colormap.js';
import type { CornerOverlay, Overlay, Pixel } from './types.js';

export function drawImage(
  ctx: CanvasRenderingContext2D,
  img: CanvasImageSource | null,
): void {
  ctx.fillStyle = '#181818';
  ctx.fillRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  if (img) ctx.drawImage(img, 0, 0);
}

export function drawOverlayPoints(ctx: CanvasRenderingContext2D, overlay: Overlay): void {
  const t = normalizeDepths(overlay.depths);
  for (let i = 0; i < overlay.pixels.length; i++) {
    const [u, v] = overlay.pixels[i];
    ctx.fillStyle = cssDepthColor(t[i]);
    ctx.fillRect(u - 1, v - 1, 3, 3);
  }
}

export function drawCornerMarkers(ctx: CanvasRenderingContext2D, corners: Pixel[]): void {
  ctx.font = 'bold 13px sans-serif';
  ctx.textBaseline = 'middle';
  for (let i = 0; i < corners.length; i++) {
    const [u, v] = corners[i];
    ctx.strokeStyle = '#ffd34d';
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.arc(u, v, 7, 0, 2 * Math.PI);
    ctx.stroke();
    ctx.beginPath();
    ctx.moveTo(u - 3, v);
    ctx.lineTo(u + 3, v);
    ctx.moveTo(u, v - 3);
    ctx.lineTo(u, v + 3);
    ctx.stroke();
    ctx.fillStyle = '#ffd34d';
    ctx.fillText(`${i + 1} ${CORNER_LABELS[i]}`, u + 11, v - 9);
  }
}

/**
 * Residual arrows from each annotated corner along the server residual,
 * magnified for visibility; the projected corner itself is marked at its
 * true position.
 */
export function drawResidualArrows(
  ctx: CanvasRenderingContext2D,
  corners: CornerOverlay[],
  magnify = 20,
): void {
  for (const c of corners) {
    const [u, v] = c.annotated;
    const [ru, rv] = c.residual;
    ctx.strokeStyle = '#ff5252';
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ctx.moveTo(u, v);
    ctx.lineTo(u + magnify * ru, v + magnify * rv);
    ctx.stroke();
    ctx.fillStyle = '#7bdcff';
    ctx.beginPath();
    ctx.arc(c.projected[0], c.projected[1], 3, 0, 2 * Math.PI);
    ctx.fill();
  }
}
