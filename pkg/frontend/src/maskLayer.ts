/**
 * A full-resolution mask raster the user paints into.
 *
 * The raster always matches the composite's pixel grid, whatever the canvas
 * zoom happens to be; callers convert screen coordinates to image coordinates
 * before painting. Values are strictly 0 or 255 so the exported PNG binarizes
 * identically on the server.
 */

export interface Point {
  x: number;
  y: number;
}

export class MaskLayer {
  readonly width: number;
  readonly height: number;
  readonly data: Uint8Array;

  constructor(width: number, height: number) {
    if (width < 1 || height < 1 || !Number.isInteger(width) || !Number.isInteger(height)) {
      throw new Error(`bad mask dimensions ${width}x${height}`);
    }
    this.width = width;
    this.height = height;
    this.data = new Uint8Array(width * height);
  }

  /** Stamp a round brush along a polyline. An empty stroke is a no-op. */
  paintBrush(stroke: Point[], radius: number, erase = false): void {
    if (stroke.length === 0) return;
    const value = erase ? 0 : 255;
    let prev = stroke[0];
    this.stampCircle(prev.x, prev.y, radius, value);
    for (let i = 1; i < stroke.length; i++) {
      const cur = stroke[i];
      const dist = Math.hypot(cur.x - prev.x, cur.y - prev.y);
      const steps = Math.max(1, Math.ceil(dist));
      for (let s = 1; s <= steps; s++) {
        const t = s / steps;
        this.stampCircle(prev.x + (cur.x - prev.x) * t, prev.y + (cur.y - prev.y) * t, radius, value);
      }
      prev = cur;
    }
  }

  fillRect(x0: number, y0: number, x1: number, y1: number, erase = false): void {
    const value = erase ? 0 : 255;
    const left = Math.max(0, Math.floor(Math.min(x0, x1)));
    const right = Math.min(this.width - 1, Math.ceil(Math.max(x0, x1)) - 1);
    const top = Math.max(0, Math.floor(Math.min(y0, y1)));
    const bottom = Math.min(this.height - 1, Math.ceil(Math.max(y0, y1)) - 1);
    for (let y = top; y <= bottom; y++) {
      this.data.fill(value, y * this.width + left, y * this.width + right + 1);
    }
  }

  /** Even-odd scanline fill; vertices in image coordinates. */
  fillPolygon(vertices: Point[], erase = false): void {
    if (vertices.length < 3) return;
    const value = erase ? 0 : 255;
    for (let y = 0; y < this.height; y++) {
      const scanY = y + 0.5;
      const xs: number[] = [];
      for (let i = 0; i < vertices.length; i++) {
        const a = vertices[i];
        const b = vertices[(i + 1) % vertices.length];
        if (a.y <= scanY !== b.y <= scanY) {
          xs.push(a.x + ((scanY - a.y) / (b.y - a.y)) * (b.x - a.x));
        }
      }
      xs.sort((p, q) => p - q);
      for (let k = 0; k + 1 < xs.length; k += 2) {
        const from = Math.max(0, Math.round(xs[k]));
        const to = Math.min(this.width - 1, Math.round(xs[k + 1]) - 1);
        if (to >= from) this.data.fill(value, y * this.width + from, y * this.width + to + 1);
      }
    }
  }

  fillAll(): void {
    this.data.fill(255);
  }

  clear(): void {
    this.data.fill(0);
  }

  selectedCount(): number {
    let n = 0;
    for (let i = 0; i < this.data.length; i++) if (this.data[i] !== 0) n++;
    return n;
  }

  isEmpty(): boolean {
    return this.data.every((v) => v === 0);
  }

  /** One byte per pixel, 1 where selected — the digest basis shared with the service. */
  binarized(): Uint8Array {
    const out = new Uint8Array(this.data.length);
    for (let i = 0; i < this.data.length; i++) out[i] = this.data[i] > 127 ? 1 : 0;
    return out;
  }

  private stampCircle(cx: number, cy: number, radius: number, value: number): void {
    const r = Math.max(0.5, radius);
    const top = Math.max(0, Math.floor(cy - r));
    const bottom = Math.min(this.height - 1, Math.ceil(cy + r));
    const left = Math.max(0, Math.floor(cx - r));
    const right = Math.min(this.width - 1, Math.ceil(cx + r));
    const r2 = r * r;
    for (let y = top; y <= bottom; y++) {
      const dy = y + 0.5 - cy;
      for (let x = left; x <= right; x++) {
        const dx = x + 0.5 - cx;
        if (dx * dx + dy * dy <= r2) this.data[y * this.width + x] = value;
      }
    }
  }
}
