/**
 * HTTP client for the harmonization service.
 *
 * Two disciplines live here, both per request kind (harmonize vs color
 * transfer):
 *  - at most one request in flight; submissions that arrive while one is
 *    running collapse into a single pending slot, latest payload wins;
 *  - every submission gets a monotonically increasing id, and a response is
 *    dropped as stale unless its id is still the newest issued.
 */

export interface MaskPng {
  bytes: Uint8Array<ArrayBuffer>;
  name: string;
}

export interface HarmonizePayload {
  composite: Blob;
  fgMask: MaskPng;
  /** Omitted entirely when the user painted no reference region. */
  guideMask: MaskPng | null;
}

export interface ResultMeta {
  latencyMs: number;
  usedDefaultReference: boolean;
}

export interface ServiceResult {
  /** PNG bytes of the harmonized image. */
  bytes: Uint8Array<ArrayBuffer>;
  meta: ResultMeta;
  requestId: number;
}

export class ServiceError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
  }
}

type Kind = "harmonize" | "color_transfer";

interface PendingCall {
  form: FormData;
  path: string;
  id: number;
  resolve: (r: ServiceResult | null) => void;
  reject: (err: unknown) => void;
}

export class ServiceClient {
  private lastIssued: Record<Kind, number> = { harmonize: 0, color_transfer: 0 };
  private inFlight: Record<Kind, boolean> = { harmonize: false, color_transfer: false };
  private pending: Record<Kind, PendingCall | null> = { harmonize: null, color_transfer: null };
  /** Observable in tests: how many requests actually reached fetch. */
  sent: Record<Kind, number> = { harmonize: 0, color_transfer: 0 };

  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  async health(): Promise<{ status: string; weights_loaded: boolean }> {
    const res = await this.fetchImpl(`${this.baseUrl}/api/health`);
    return (await res.json()) as { status: string; weights_loaded: boolean };
  }

  /** Resolves null when a newer submission superseded this one. */
  harmonize(payload: HarmonizePayload): Promise<ServiceResult | null> {
    return this.submit("harmonize", "/api/harmonize", this.toForm(payload));
  }

  colorTransfer(payload: HarmonizePayload, r1: number, r2: number): Promise<ServiceResult | null> {
    const form = this.toForm(payload);
    form.append("r1", String(r1));
    form.append("r2", String(r2));
    return this.submit("color_transfer", "/api/color_transfer", form);
  }

  private toForm(payload: HarmonizePayload): FormData {
    const form = new FormData();
    form.append("composite", payload.composite, "composite.png");
    form.append("fg_mask", new Blob([payload.fgMask.bytes], { type: "image/png" }), payload.fgMask.name);
    if (payload.guideMask) {
      form.append("guide_mask", new Blob([payload.guideMask.bytes], { type: "image/png" }), payload.guideMask.name);
    }
    return form;
  }

  private submit(kind: Kind, path: string, form: FormData): Promise<ServiceResult | null> {
    const id = ++this.lastIssued[kind];
    return new Promise<ServiceResult | null>((resolve, reject) => {
      const call: PendingCall = { form, path, id, resolve, reject };
      if (this.inFlight[kind]) {
        // replace whatever was queued; the superseded caller sees null
        const dropped = this.pending[kind];
        this.pending[kind] = call;
        if (dropped) dropped.resolve(null);
        return;
      }
      void this.run(kind, call);
    });
  }

  private async run(kind: Kind, call: PendingCall): Promise<void> {
    this.inFlight[kind] = true;
    try {
      const result = await this.send(call);
      // a newer id was issued while this one was on the wire: stale, drop it
      call.resolve(call.id === this.lastIssued[kind] ? result : null);
    } catch (err) {
      call.reject(err);
    } finally {
      this.inFlight[kind] = false;
      const next = this.pending[kind];
      this.pending[kind] = null;
      if (next) void this.run(kind, next);
    }
  }

  private async send(call: PendingCall): Promise<ServiceResult> {
    this.sent[call.path.endsWith("color_transfer") ? "color_transfer" : "harmonize"]++;
    const res = await this.fetchImpl(`${this.baseUrl}${call.path}`, { method: "POST", body: call.form });
    if (!res.ok) {
      throw new ServiceError(res.status, await extractDetail(res));
    }
    const meta = parseMeta(res.headers.get("X-Result-Meta"));
    const bytes = new Uint8Array(await res.arrayBuffer());
    return { bytes, meta, requestId: call.id };
  }
}

async function extractDetail(res: Response): Promise<string> {
  try {
    const body = (await res.json()) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
    return JSON.stringify(body.detail ?? body);
  } catch {
    return `service error ${res.status}`;
  }
}

function parseMeta(header: string | null): ResultMeta {
  if (!header) return { latencyMs: 0, usedDefaultReference: false };
  try {
    const raw = JSON.parse(header) as { latency_ms?: number; used_default_reference?: boolean };
    return {
      latencyMs: raw.latency_ms ?? 0,
      usedDefaultReference: raw.used_default_reference ?? false,
    };
  } catch {
    return { latencyMs: 0, usedDefaultReference: false };
  }
}
