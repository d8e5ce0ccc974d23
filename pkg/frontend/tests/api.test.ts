import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiError, StudioApi } from "../src/api";

type Call = { url: string; init?: RequestInit };

function stubFetch(handler: (url: string, init?: RequestInit) => Response) {
  const calls: Call[] = [];
  vi.stubGlobal(
    "fetch",
    vi.fn(async (url: string, init?: RequestInit) => {
      calls.push({ url, init });
      return handler(url, init);
    }),
  );
  return calls;
}

const json = (body: unknown, status = 200) =>
  new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });

afterEach(() => {
  vi.unstubAllGlobals();
});

describe("StudioApi", () => {
  it("posts generate requests as-is", async () => {
    const calls = stubFetch(() =>
      json({ avatar_id: "abc", attrs_parsed: {}, unrecognized_tokens: [], checkpoint: "c" }),
    );
    const api = new StudioApi("http://svc");
    const res = await api.generate({ prompt: "p", seed: 7, steps: 20, guidance: 2 });
    expect(res.avatar_id).toBe("abc");
    expect(calls[0].url).toBe("http://svc/generate");
    expect(JSON.parse(String(calls[0].init?.body))).toEqual({
      prompt: "p",
      seed: 7,
      steps: 20,
      guidance: 2,
    });
  });

  it("returns render blobs with the response headers", async () => {
    // raw bytes, not a Blob body: jsdom's Blob fails undici's body checks
    stubFetch(
      () =>
        new Response(new Uint8Array([1, 2, 3]), {
          status: 200,
          headers: { "X-Avatar-Id": "abc", "X-Expression": "smile" },
        }),
    );
    const api = new StudioApi();
    const res = await api.render({ avatarId: "abc", exp: "smile" });
    expect(res.avatarId).toBe("abc");
    expect(res.expression).toBe("smile");
    expect(res.blob.size).toBe(3);
  });

  it("sends mask_png_b64 only when given", async () => {
    const calls = stubFetch(() =>
      json({ avatar_id: "x", changed: true, attrs_parsed: {}, unrecognized_tokens: [], checkpoint: "c" }),
    );
    const api = new StudioApi();
    await api.edit({ avatarId: "a", prompt: "green hair", which: "tex", maskPngB64: "AAAA" });
    await api.edit({ avatarId: "a", prompt: "older", which: "global" });
    const first = JSON.parse(String(calls[0].init?.body));
    const second = JSON.parse(String(calls[1].init?.body));
    expect(first.mask_png_b64).toBe("AAAA");
    expect("mask_png_b64" in second).toBe(false);
    expect("mask_region" in second).toBe(false);
  });

  it("encodes interpolate as query parameters", async () => {
    const calls = stubFetch(() => json({ avatar_id: "m", alpha: 0.25, checkpoint: "c" }));
    const api = new StudioApi();
    await api.interpolate("ida", "idb", 0.25);
    expect(calls[0].url).toBe("/interpolate?id_a=ida&id_b=idb&alpha=0.25");
    expect(calls[0].init).toBeUndefined();
  });

  it("surfaces the service detail message on errors", async () => {
    stubFetch(() => json({ detail: "alpha must be in [0, 1]" }, 400));
    const api = new StudioApi();
    await expect(api.interpolate("a", "b", 3)).rejects.toThrowError(
      new ApiError(400, "alpha must be in [0, 1]"),
    );
  });

  it("falls back to status text for non-JSON errors", async () => {
    stubFetch(() => new Response("boom", { status: 500, statusText: "Internal Server Error" }));
    const api = new StudioApi();
    await expect(api.health()).rejects.toMatchObject({ status: 500 });
  });
});
