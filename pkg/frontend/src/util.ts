/** Small shared helpers: base64 for binary payloads, debouncing. */

// Looked up dynamically so browser builds need no node typings.
interface NodeBufferCtor {
  from(data: ArrayLike<number> | string, encoding?: string): Uint8Array & {
    toString(encoding: string): string;
  };
}

const nodeBuffer = (globalThis as { Buffer?: NodeBufferCtor }).Buffer;

/** Encode bytes as base64, working in both browsers and node. */
export function bytesToBase64(bytes: Uint8Array): string {
  if (nodeBuffer) {
    return nodeBuffer.from(bytes).toString("base64");
  }
  let bin = "";
  for (const b of bytes) bin += String.fromCharCode(b);
  return btoa(bin);
}

export function base64ToBytes(b64: string): Uint8Array {
  if (nodeBuffer) {
    return new Uint8Array(nodeBuffer.from(b64, "base64"));
  }
  const bin = atob(b64);
  const out = new Uint8Array(bin.length);
  for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
  return out;
}

export function bytesEqual(a: Uint8Array, b: Uint8Array): boolean {
  if (a.length !== b.length) return false;
  for (let i = 0; i < a.length; i++) {
    if (a[i] !== b[i]) return false;
  }
  return true;
}

export interface Debounced<A extends unknown[]> {
  (...args: A): void;
  /** Run a pending call immediately, if any. */
  flush(): void;
  cancel(): void;
}

/**
 * Collapse rapid call bursts into one trailing call after `waitMs` of
 * quiet. Used to avoid one PUT per pixel while dragging a control point.
 */
export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  waitMs: number,
): Debounced<A> {
  let timer: ReturnType<typeof setTimeout> | null = null;
  let pending: A | null = null;

  const out = (...args: A) => {
    pending = args;
    if (timer !== null) clearTimeout(timer);
    timer = setTimeout(() => {
      timer = null;
      const args2 = pending!;
      pending = null;
      fn(...args2);
    }, waitMs);
  };
  out.flush = () => {
    if (timer === null) return;
    clearTimeout(timer);
    timer = null;
    const args = pending!;
    pending = null;
    fn(...args);
  };
  out.cancel = () => {
    if (timer !== null) clearTimeout(timer);
    timer = null;
    pending = null;
  };
  return out;
}
