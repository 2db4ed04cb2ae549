/**
 * Decoder for the binary netpbm rasters the screening service speaks:
 * P5 (8-bit grayscale) and P6 (8-bit RGB). Headers may contain
 * `#` comments anywhere a token boundary is legal.
 */

export interface Raster {
  width: number;
  height: number;
  maxval: number;
  /** 1 for grayscale (P5), 3 for RGB (P6). */
  channels: 1 | 3;
  /** Row-major samples, `width * height * channels` bytes. */
  pixels: Uint8Array;
}

export class PgmError extends Error {}

const WHITESPACE = new Set([0x20, 0x09, 0x0a, 0x0d, 0x0b, 0x0c]);

/** Read the next whitespace-delimited header token, skipping comments. */
function nextToken(bytes: Uint8Array, pos: number): { token: string; pos: number } {
  while (pos < bytes.length) {
    if (WHITESPACE.has(bytes[pos])) {
      pos += 1;
    } else if (bytes[pos] === 0x23) { // '#' comment runs to end of line
      while (pos < bytes.length && bytes[pos] !== 0x0a) pos += 1;
    } else {
      break;
    }
  }
  if (pos >= bytes.length) throw new PgmError("truncated header");
  let end = pos;
  while (end < bytes.length && !WHITESPACE.has(bytes[end]) && bytes[end] !== 0x23) {
    end += 1;
  }
  return { token: String.fromCharCode(...bytes.subarray(pos, end)), pos: end };
}

function parseDimension(token: string, what: string): number {
  if (!/^[0-9]+$/.test(token)) throw new PgmError(`bad ${what}: ${token}`);
  const value = parseInt(token, 10);
  if (value < 1) throw new PgmError(`bad ${what}: ${token}`);
  return value;
}

export function decodeNetpbm(bytes: Uint8Array): Raster {
  if (bytes.length < 2) throw new PgmError("not a netpbm raster");
  const magic = String.fromCharCode(bytes[0], bytes[1]);
  if (magic !== "P5" && magic !== "P6") {
    throw new PgmError(`unsupported magic ${JSON.stringify(magic)}`);
  }
  const channels: 1 | 3 = magic === "P5" ? 1 : 3;

  let cursor = 2;
  const w = nextToken(bytes, cursor);
  const h = nextToken(bytes, (cursor = w.pos));
  const m = nextToken(bytes, (cursor = h.pos));
  const width = parseDimension(w.token, "width");
  const height = parseDimension(h.token, "height");
  const maxval = parseDimension(m.token, "maxval");
  if (maxval > 255) throw new PgmError(`16-bit rasters unsupported (maxval ${maxval})`);

  // exactly one whitespace byte separates the header from the payload
  if (m.pos >= bytes.length || !WHITESPACE.has(bytes[m.pos])) {
    throw new PgmError("missing header terminator");
  }
  const start = m.pos + 1;
  const expected = width * height * channels;
  if (bytes.length - start < expected) {
    throw new PgmError(
      `payload too short: ${bytes.length - start} of ${expected} bytes`);
  }
  return {
    width, height, maxval, channels,
    pixels: bytes.subarray(start, start + expected),
  };
}

/** Convenience for response bodies. */
export async function decodeResponse(resp: Response): Promise<Raster> {
  return decodeNetpbm(new Uint8Array(await resp.arrayBuffer()));
}
