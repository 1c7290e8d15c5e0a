/**
 * Minimal 8-bit grayscale PNG encode/decode, no dependencies.
 *
 * The encoder writes uncompressed ("stored") deflate blocks, which every PNG
 * reader accepts; mask rasters are small and compress poorly anyway. The
 * decoder only understands what the encoder emits plus filter-0 rows, which
 * is all the round-trip tests need.
 */

const SIGNATURE = Uint8Array.of(0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a);

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    table[n] = c >>> 0;
  }
  return table;
})();

export function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) c = CRC_TABLE[(c ^ bytes[i]) & 0xff] ^ (c >>> 8);
  return (c ^ 0xffffffff) >>> 0;
}

export function adler32(bytes: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (let i = 0; i < bytes.length; i++) {
    a = (a + bytes[i]) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

function be32(value: number): Uint8Array {
  return Uint8Array.of((value >>> 24) & 0xff, (value >>> 16) & 0xff, (value >>> 8) & 0xff, value & 0xff);
}

function chunk(type: string, data: Uint8Array): Uint8Array {
  const typed = new Uint8Array(4 + data.length);
  for (let i = 0; i < 4; i++) typed[i] = type.charCodeAt(i);
  typed.set(data, 4);
  const out = new Uint8Array(12 + data.length);
  out.set(be32(data.length), 0);
  out.set(typed, 4);
  out.set(be32(crc32(typed)), 8 + data.length);
  return out;
}

/** Raw scanlines (filter byte 0 per row) wrapped in a stored-block zlib stream. */
function zlibStored(raw: Uint8Array): Uint8Array {
  const blocks: Uint8Array[] = [Uint8Array.of(0x78, 0x01)];
  const max = 65535;
  for (let off = 0; off < raw.length || off === 0; off += max) {
    const len = Math.min(max, raw.length - off);
    const final = off + len >= raw.length ? 1 : 0;
    const header = Uint8Array.of(final, len & 0xff, (len >>> 8) & 0xff, ~len & 0xff, (~len >>> 8) & 0xff);
    blocks.push(header, raw.subarray(off, off + len));
    if (final) break;
  }
  blocks.push(be32(adler32(raw)));
  let total = 0;
  for (const b of blocks) total += b.length;
  const out = new Uint8Array(total);
  let at = 0;
  for (const b of blocks) {
    out.set(b, at);
    at += b.length;
  }
  return out;
}

/** Encode a row-major WxH byte raster as an 8-bit grayscale PNG. */
export function encodeGrayPng(width: number, height: number, pixels: Uint8Array): Uint8Array<ArrayBuffer> {
  if (pixels.length !== width * height) {
    throw new Error(`raster is ${pixels.length} bytes, expected ${width * height}`);
  }
  const ihdr = new Uint8Array(13);
  ihdr.set(be32(width), 0);
  ihdr.set(be32(height), 4);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 0; // grayscale
  const raw = new Uint8Array(height * (width + 1));
  for (let y = 0; y < height; y++) {
    raw[y * (width + 1)] = 0; // filter: none
    raw.set(pixels.subarray(y * width, (y + 1) * width), y * (width + 1) + 1);
  }
  const parts = [SIGNATURE, chunk("IHDR", ihdr), chunk("IDAT", zlibStored(raw)), chunk("IEND", new Uint8Array(0))];
  let total = 0;
  for (const p of parts) total += p.length;
  const out = new Uint8Array(total);
  let at = 0;
  for (const p of parts) {
    out.set(p, at);
    at += p.length;
  }
  return out;
}

export interface GrayImage {
  width: number;
  height: number;
  pixels: Uint8Array;
}

function readU32(bytes: Uint8Array, at: number): number {
  return ((bytes[at] << 24) | (bytes[at + 1] << 16) | (bytes[at + 2] << 8) | bytes[at + 3]) >>> 0;
}

/** Decode PNGs produced by encodeGrayPng (grayscale-8, filter 0, stored deflate). */
export function decodeGrayPng(bytes: Uint8Array): GrayImage {
  for (let i = 0; i < 8; i++) {
    if (bytes[i] !== SIGNATURE[i]) throw new Error("not a png");
  }
  let at = 8;
  let width = 0;
  let height = 0;
  const idat: Uint8Array[] = [];
  while (at < bytes.length) {
    const len = readU32(bytes, at);
    const type = String.fromCharCode(bytes[at + 4], bytes[at + 5], bytes[at + 6], bytes[at + 7]);
    const data = bytes.subarray(at + 8, at + 8 + len);
    const typed = bytes.subarray(at + 4, at + 8 + len);
    if (readU32(bytes, at + 8 + len) !== crc32(typed)) throw new Error(`bad crc in ${type}`);
    if (type === "IHDR") {
      width = readU32(data, 0);
      height = readU32(data, 4);
      if (data[8] !== 8 || data[9] !== 0) throw new Error("only grayscale-8 is supported");
      if (data[12] !== 0) throw new Error("interlaced pngs not supported");
    } else if (type === "IDAT") {
      idat.push(data);
    } else if (type === "IEND") {
      break;
    }
    at += 12 + len;
  }
  let zlen = 0;
  for (const d of idat) zlen += d.length;
  const z = new Uint8Array(zlen);
  let zat = 0;
  for (const d of idat) {
    z.set(d, zat);
    zat += d.length;
  }
  const raw = inflateStored(z);
  const pixels = new Uint8Array(width * height);
  for (let y = 0; y < height; y++) {
    if (raw[y * (width + 1)] !== 0) throw new Error("only filter 0 is supported");
    pixels.set(raw.subarray(y * (width + 1) + 1, (y + 1) * (width + 1)), y * width);
  }
  return { width, height, pixels };
}

function inflateStored(z: Uint8Array): Uint8Array {
  if ((z[0] & 0x0f) !== 8) throw new Error("not a zlib stream");
  let at = 2;
  const parts: Uint8Array[] = [];
  let total = 0;
  for (;;) {
    const header = z[at];
    if ((header & 0x06) !== 0) throw new Error("compressed deflate blocks not supported");
    const len = z[at + 1] | (z[at + 2] << 8);
    parts.push(z.subarray(at + 5, at + 5 + len));
    total += len;
    at += 5 + len;
    if (header & 1) break;
  }
  const out = new Uint8Array(total);
  let o = 0;
  for (const p of parts) {
    out.set(p, o);
    o += p.length;
  }
  const stored = readU32(z, at);
  if (adler32(out) !== stored) throw new Error("adler32 mismatch");
  return out;
}
