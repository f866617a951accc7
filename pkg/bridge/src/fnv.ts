/**
 * FNV-1a label hashing, the deterministic stand-in for model label scores in
 * mock mode. Any conforming mock implementation must reproduce these values
 * bit-for-bit, so the hash is spelled out rather than imported.
 */

export function fnv1a32(data: Uint8Array): number {
  let h = 0x811c9dc5;
  for (const byte of data) {
    h ^= byte;
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h >>> 0;
}

export function mockLabelScore(label: string): number {
  return (fnv1a32(new TextEncoder().encode(label)) % 10000) / 10000;
}

/** Score every label, descending by score with ties broken by label. */
export function scoreLabelsMock(labels: string[]): [string, number][] {
  // ties compare labels by code point; UTF-8 byte order matches that exactly,
  // unlike the UTF-16 order of the builtin string comparison
  const scored = labels.map(
    (lab): [string, number, Uint8Array] => [lab, mockLabelScore(lab), new TextEncoder().encode(lab)],
  );
  scored.sort(([, sa, ba], [, sb, bb]) =>
    sa !== sb ? sb - sa : Buffer.compare(Buffer.from(ba), Buffer.from(bb)),
  );
  return scored.map(([lab, score]) => [lab, score]);
}
