import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { isSupportedRender, RENDER_CHOICES } from "../src/state.js";
import { FakeFetch } from "./helpers.js";

describe("api client", () => {
    it("builds image urls from the render choice", () => {
        const api = new ApiClient("");
        expect(api.imageUrl("pat000001", { colormap: "jet", scale: "linear" }))
            .toBe("/api/patterns/pat000001/image.png?colormap=jet&scale=linear");
        expect(api.imageUrl("pat000001", { colormap: "grayscale", scale: "log" }))
            .toBe("/api/patterns/pat000001/image.png?colormap=grayscale&scale=log");
    });

    it("toggling the scale changes the query parameter only", () => {
        const api = new ApiClient("");
        const lin = api.imageUrl("p", { colormap: "jet", scale: "linear" });
        const log = api.imageUrl("p", { colormap: "jet", scale: "log" });
        expect(lin).not.toBe(log);
        expect(lin.replace("scale=linear", "scale=log")).toBe(log);
    });

    it("queries detections with family, iteration and threshold", async () => {
        const fake = new FakeFetch();
        fake.respondWith({ id: "p", is_single_hit: true, threshold: 0.24,
                           detections: [] });
        const api = new ApiClient("", fake.fn);
        await api.detections("p", "cnn128-jet-linear", 2500, 0.24);
        expect(fake.captured[0].url).toBe(
            "/api/patterns/p/detections?family=cnn128-jet-linear" +
            "&iteration=2500&threshold=0.24",
        );
    });

    it("raises ApiError with the service detail on failure", async () => {
        const fake = new FakeFetch();
        fake.respondWith({ error: "UnknownPatternError",
                           detail: "unknown pattern id 'ghost'" }, 404);
        const api = new ApiClient("", fake.fn);
        await expect(api.listPatterns(0, 10)).rejects.toThrowError(
            /unknown pattern id/);
        try {
            fake.respondWith({ detail: "nope" }, 409);
            await api.startTrain({});
        } catch (err) {
            expect((err as ApiError).status).toBe(409);
        }
    });

    it("only the four supported representations are offered", () => {
        expect(RENDER_CHOICES).toHaveLength(4);
        expect(isSupportedRender({ colormap: "jet", scale: "linear" })).toBe(true);
        expect(isSupportedRender(
            { colormap: "viridis" as never, scale: "linear" })).toBe(false);
    });
});
