/**
 * Corner-click state for one frame. The four corners are ordered; each
 * click gets the next label in the fixed sequence TL, TR, BR, BL, and
 * the server enforces the same winding on save.
 */

import type { Pixel } from './types.js';

export const CORNER_LABELS = ['TL', 'TR', 'BR', 'BL'] as const;
export type CornerLabel = (typeof CORNER_LABELS)[number];

export type ClickResult =
  | { ok: true; index: number; label: CornerLabel }
  | { ok: false; reason: string };

export class AnnotationDraft {
  corners: Pixel[];
  revision: number;
  dirty = false;

  constructor(
    readonly frameId: string,
    readonly width: number,
    readonly height: number,
    initial: Pixel[] = [],
    revision = 0,
  ) {
    this.corners = initial.map(([u, v]) => [u, v]);
    this.revision = revision;
  }

  addClick(u: number, v: number): ClickResult {
    if (this.corners.length >= 4) {
      return { ok: false, reason: 'frame already has 4 corners; undo or save first' };
    }
    if (!(u >= 0 && u < this.width && v >= 0 && v < this.height)) {
      return {
        ok: false,
        reason: `click (${u.toFixed(1)}, ${v.toFixed(1)}) is outside the `
          + `${this.width}x${this.height} image`,
      };
    }
    const index = this.corners.length;
    this.corners.push([u, v]);
    this.dirty = true;
    return { ok: true, index, label: CORNER_LABELS[index] };
  }

  /** Remove the most recent click. Returns false when there is nothing to undo. */
  undo(): boolean {
    if (this.corners.length === 0) return false;
    this.corners.pop();
    this.dirty = true;
    return true;
  }

  get complete(): boolean {
    return this.corners.length === 4;
  }

  get canSave(): boolean {
    return this.complete && this.dirty;
  }

  /** Label the next click will receive, or null when all four are placed. */
  nextLabel(): CornerLabel | null {
    return this.complete ? null : CORNER_LABELS[this.corners.length];
  }

  markSaved(revision: number): void {
    this.revision = revision;
    this.dirty = false;
  }
}
