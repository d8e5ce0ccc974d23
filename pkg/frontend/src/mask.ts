/**
 * UV-space paint mask: a w*h byte grid stamped with a round brush.
 *
 * This is the painter's whole state; the canvas layer only projects it.
 * Values are 0 (keep source) or 255 (regenerate), matching the service's
 * mask convention after PNG round-trip.
 */

import { encodeGrayPng, toBase64 } from "./png";

export class MaskModel {
  readonly width: number;
  readonly height: number;
  readonly data: Uint8Array;

  constructor(width = 64, height = 64) {
    this.width = width;
    this.height = height;
    this.data = new Uint8Array(width * height);
  }

  /** Stamp a filled circle at UV-pixel (x, y); erase clears instead. */
  paint(x: number, y: number, radius: number, erase = false): void {
    const value = erase ? 0 : 255;
    const r2 = radius * radius;
    const x0 = Math.max(0, Math.floor(x - radius));
    const x1 = Math.min(this.width - 1, Math.ceil(x + radius));
    const y0 = Math.max(0, Math.floor(y - radius));
    const y1 = Math.min(this.height - 1, Math.ceil(y + radius));
    for (let py = y0; py <= y1; py++) {
      for (let px = x0; px <= x1; px++) {
        const dx = px - x;
        const dy = py - y;
        if (dx * dx + dy * dy <= r2) {
          this.data[py * this.width + px] = value;
        }
      }
    }
  }

  /** Stamp along the segment from (x0,y0) to (x1,y1) so fast drags stay solid. */
  stroke(x0: number, y0: number, x1: number, y1: number, radius: number, erase = false): void {
    const steps = Math.max(1, Math.ceil(Math.hypot(x1 - x0, y1 - y0)));
    for (let i = 0; i <= steps; i++) {
      const t = i / steps;
      this.paint(x0 + (x1 - x0) * t, y0 + (y1 - y0) * t, radius, erase);
    }
  }

  clear(): void {
    this.data.fill(0);
  }

  isEmpty(): boolean {
    return this.data.every((v) => v === 0);
  }

  paintedCount(): number {
    let n = 0;
    for (const v of this.data) if (v > 0) n++;
    return n;
  }

  toPngBase64(): string {
    return toBase64(encodeGrayPng(this.width, this.height, this.data));
  }
}
