import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { LabelSession, SHARED_DEFAULT_BOX } from "../src/labeler.js";
import { FakeFetch } from "./helpers.js";

describe("label session", () => {
    it("pressing s posts a single label with the shared default box", async () => {
        const fake = new FakeFetch();
        const session = new LabelSession(new ApiClient("", fake.fn));
        const state = await session.handleKey("pat000007", "s");
        expect(state).toBe("saved");
        expect(fake.captured).toHaveLength(1);
        const req = fake.captured[0];
        expect(req.url).toBe("/api/labels");
        expect(req.method).toBe("POST");
        // exact request contract: the service writes this as the LabelRecord
        expect(req.body).toEqual({
            id: "pat000007",
            label: "single",
            author: "human",
            box: { cx: 0.5, cy: 0.5, w: 0.3, h: 0.55 },
        });
    });

    it("pressing x posts non_single without a box", async () => {
        const fake = new FakeFetch();
        const session = new LabelSession(new ApiClient("", fake.fn));
        await session.handleKey("pat000001", "x");
        expect(fake.captured[0].body).toEqual({
            id: "pat000001",
            label: "non_single",
            author: "human",
        });
    });

    it("per-item box override beats the shared box", async () => {
        const fake = new FakeFetch();
        const session = new LabelSession(new ApiClient("", fake.fn));
        session.setBoxOverride("p1", { cx: 0.4, cy: 0.6, w: 0.2, h: 0.3 });
        await session.handleKey("p1", "s");
        expect((fake.captured[0].body as any).box).toEqual(
            { cx: 0.4, cy: 0.6, w: 0.2, h: 0.3 },
        );
        // other items still get the session default
        await session.handleKey("p2", "s");
        expect((fake.captured[1].body as any).box).toEqual(SHARED_DEFAULT_BOX);
    });

    it("unbound keys do nothing", async () => {
        const fake = new FakeFetch();
        const session = new LabelSession(new ApiClient("", fake.fn));
        expect(await session.handleKey("p1", "q")).toBeNull();
        expect(fake.captured).toHaveLength(0);
    });

    it("failed posts become visible and can be retried", async () => {
        const fake = new FakeFetch();
        const session = new LabelSession(new ApiClient("", fake.fn));
        fake.failNext = true;
        expect(await session.handleKey("p1", "s")).toBe("failed");
        expect(session.states.get("p1")).toBe("failed");
        expect(session.counts.single).toBe(0); // no silent success

        expect(await session.retry("p1")).toBe("saved");
        expect(session.states.get("p1")).toBe("saved");
        expect(session.counts.single).toBe(1);
        // the retried request is identical to the original
        expect(fake.captured[0].body).toEqual({
            id: "p1", label: "single", author: "human",
            box: SHARED_DEFAULT_BOX,
        });
    });

    it("counts labeled patterns per class", async () => {
        const fake = new FakeFetch();
        const session = new LabelSession(new ApiClient("", fake.fn));
        await session.handleKey("a", "s");
        await session.handleKey("b", "x");
        await session.handleKey("c", "x");
        expect(session.counts).toEqual({ single: 1, non_single: 2 });
    });
});
