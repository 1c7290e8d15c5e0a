import { describe, expect, it, vi } from "vitest";
import { ServiceClient, ServiceError, type HarmonizePayload } from "../src/api.js";

function payload(withGuide = true): HarmonizePayload {
  return {
    composite: new Blob([Uint8Array.of(1, 2, 3)], { type: "image/png" }),
    fgMask: { bytes: Uint8Array.of(4, 5), name: "fg_mask.png" },
    guideMask: withGuide ? { bytes: Uint8Array.of(6), name: "guide_mask.png" } : null,
  };
}

function okResponse(bytes: Uint8Array, meta?: Record<string, unknown>): Response {
  const headers: Record<string, string> = {};
  if (meta) headers["X-Result-Meta"] = JSON.stringify(meta);
  return new Response(bytes.slice(), { status: 200, headers });
}

interface Deferred {
  promise: Promise<Response>;
  resolve: (r: Response) => void;
}

function deferred(): Deferred {
  let resolve!: (r: Response) => void;
  const promise = new Promise<Response>((r) => {
    resolve = r;
  });
  return { promise, resolve };
}

describe("ServiceClient", () => {
  it("posts multipart parts and surfaces bytes plus result metadata", async () => {
    const calls: { url: string; body: FormData }[] = [];
    const fetchImpl = vi.fn(async (url: RequestInfo | URL, init?: RequestInit) => {
      calls.push({ url: String(url), body: init!.body as FormData });
      return okResponse(Uint8Array.of(9, 8, 7), { latency_ms: 41.5, used_default_reference: true });
    });
    const client = new ServiceClient("http://svc", fetchImpl as unknown as typeof fetch);

    const result = await client.harmonize(payload(true));
    expect(result).not.toBeNull();
    expect(Array.from(result!.bytes)).toEqual([9, 8, 7]);
    expect(result!.meta.latencyMs).toBe(41.5);
    expect(result!.meta.usedDefaultReference).toBe(true);

    expect(calls[0].url).toBe("http://svc/api/harmonize");
    const form = calls[0].body;
    expect(form.get("composite")).toBeInstanceOf(Blob);
    expect(form.get("fg_mask")).toBeInstanceOf(Blob);
    expect(form.get("guide_mask")).toBeInstanceOf(Blob);
    expect(form.has("r1")).toBe(false);
  });

  it("omits guide_mask entirely when no reference region was painted", async () => {
    let form: FormData | null = null;
    const fetchImpl = vi.fn(async (_url: RequestInfo | URL, init?: RequestInit) => {
      form = init!.body as FormData;
      return okResponse(Uint8Array.of(1));
    });
    const client = new ServiceClient("", fetchImpl as unknown as typeof fetch);
    await client.harmonize(payload(false));
    expect(form!.has("guide_mask")).toBe(false);
    expect(form!.has("fg_mask")).toBe(true);
  });

  it("appends r1/r2 form fields for color transfer", async () => {
    let url = "";
    let form: FormData | null = null;
    const fetchImpl = vi.fn(async (u: RequestInfo | URL, init?: RequestInit) => {
      url = String(u);
      form = init!.body as FormData;
      return okResponse(Uint8Array.of(1));
    });
    const client = new ServiceClient("", fetchImpl as unknown as typeof fetch);
    await client.colorTransfer(payload(true), 0.25, 1.4);
    expect(url).toBe("/api/color_transfer");
    expect(form!.get("r1")).toBe("0.25");
    expect(form!.get("r2")).toBe("1.4");
  });

  it("defaults metadata when the header is absent", async () => {
    const fetchImpl = vi.fn(async () => okResponse(Uint8Array.of(1)));
    const client = new ServiceClient("", fetchImpl as unknown as typeof fetch);
    const result = await client.harmonize(payload(true));
    expect(result!.meta).toEqual({ latencyMs: 0, usedDefaultReference: false });
  });

  it("raises ServiceError carrying the service's detail string", async () => {
    const fetchImpl = vi.fn(
      async () =>
        new Response(JSON.stringify({ detail: "missing part(s): fg_mask" }), {
          status: 400,
          headers: { "content-type": "application/json" },
        }),
    );
    const client = new ServiceClient("", fetchImpl as unknown as typeof fetch);
    const err = await client.harmonize(payload(true)).catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ServiceError);
    expect((err as ServiceError).status).toBe(400);
    expect((err as ServiceError).message).toBe("missing part(s): fg_mask");
  });

  it("falls back to a generic message for non-json error bodies", async () => {
    const fetchImpl = vi.fn(async () => new Response("boom", { status: 500 }));
    const client = new ServiceClient("", fetchImpl as unknown as typeof fetch);
    const err = await client.harmonize(payload(true)).catch((e: unknown) => e);
    expect((err as ServiceError).message).toBe("service error 500");
  });

  it("drops a response that was superseded while on the wire", async () => {
    const first = deferred();
    const second = deferred();
    const gates = [first, second];
    const fetchImpl = vi.fn(() => gates.shift()!.promise);
    const client = new ServiceClient("", fetchImpl as unknown as typeof fetch);

    const a = client.harmonize(payload(true));
    const b = client.harmonize(payload(true)); // issued while a is in flight
    first.resolve(okResponse(Uint8Array.of(1)));
    await expect(a).resolves.toBeNull(); // a's id is no longer newest
    second.resolve(okResponse(Uint8Array.of(2)));
    const rb = await b;
    expect(rb).not.toBeNull();
    expect(Array.from(rb!.bytes)).toEqual([2]);
    expect(client.sent.harmonize).toBe(2);
  });

  it("collapses a burst into first-plus-latest and resolves the rest null", async () => {
    const first = deferred();
    const second = deferred();
    const gates = [first, second];
    const forms: FormData[] = [];
    const fetchImpl = vi.fn((_url: RequestInfo | URL, init?: RequestInit) => {
      forms.push(init!.body as FormData);
      return gates.shift()!.promise;
    });
    const client = new ServiceClient("", fetchImpl as unknown as typeof fetch);

    const promises = [0.1, 0.3, 0.5, 0.7, 0.9].map((r1) => client.colorTransfer(payload(true), r1, 1.0));
    first.resolve(okResponse(Uint8Array.of(1)));
    second.resolve(okResponse(Uint8Array.of(5)));
    const settled = await Promise.all(promises);

    expect(client.sent.color_transfer).toBe(2); // burst of five, two requests
    expect(settled.slice(0, 4)).toEqual([null, null, null, null]);
    expect(Array.from(settled[4]!.bytes)).toEqual([5]);
    expect(forms[1].get("r1")).toBe("0.9"); // the latest payload won
  });

  it("tracks harmonize and color transfer queues independently", async () => {
    const harm = deferred();
    const color = deferred();
    const fetchImpl = vi.fn((url: RequestInfo | URL) =>
      String(url).endsWith("color_transfer") ? color.promise : harm.promise,
    );
    const client = new ServiceClient("", fetchImpl as unknown as typeof fetch);

    const a = client.harmonize(payload(true));
    const b = client.colorTransfer(payload(true), 1, 1);
    harm.resolve(okResponse(Uint8Array.of(1)));
    color.resolve(okResponse(Uint8Array.of(2)));
    // neither supersedes the other: different kinds
    expect((await a)).not.toBeNull();
    expect((await b)).not.toBeNull();
  });

  it("runs a queued submission after the in-flight one fails", async () => {
    const first = deferred();
    const second = deferred();
    const gates = [first, second];
    const fetchImpl = vi.fn(() => gates.shift()!.promise);
    const client = new ServiceClient("", fetchImpl as unknown as typeof fetch);

    const a = client.harmonize(payload(true));
    const b = client.harmonize(payload(true));
    first.resolve(new Response(JSON.stringify({ detail: "nope" }), { status: 422 }));
    await expect(a).rejects.toBeInstanceOf(ServiceError);
    second.resolve(okResponse(Uint8Array.of(3)));
    const rb = await b;
    expect(Array.from(rb!.bytes)).toEqual([3]);
  });
});
