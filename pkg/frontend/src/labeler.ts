// Keyboard labeling session: one keystroke, one POSTed label. Singles
// reuse the session's shared bounding box unless the item has its own.
// Failed POSTs are kept visible for retry; nothing is dropped silently.

import type { ApiClient, Box, LabelKind, LabelRequest } from "./api.js";

export const SHARED_DEFAULT_BOX: Box = { cx: 0.5, cy: 0.5, w: 0.3, h: 0.55 };

export const KEY_BINDINGS: Record<string, LabelKind> = {
    s: "single",
    x: "non_single",
};

export type PostState = "saved" | "pending" | "failed";

export class LabelSession {
    sharedBox: Box = { ...SHARED_DEFAULT_BOX };
    readonly states = new Map<string, PostState>();
    readonly counts = { single: 0, non_single: 0 };
    private overrides = new Map<string, Box>();
    private lastRequest = new Map<string, LabelRequest>();

    constructor(private api: ApiClient, private author = "human") {}

    setBoxOverride(id: string, box: Box): void {
        this.overrides.set(id, box);
    }

    requestFor(id: string, key: string): LabelRequest | null {
        const label = KEY_BINDINGS[key];
        if (!label) return null;
        const request: LabelRequest = { id, label, author: this.author };
        if (label === "single") {
            request.box = this.overrides.get(id) ?? { ...this.sharedBox };
        }
        return request;
    }

    async handleKey(id: string, key: string): Promise<PostState | null> {
        const request = this.requestFor(id, key);
        if (!request) return null;
        this.lastRequest.set(id, request);
        return this.post(id, request);
    }

    async retry(id: string): Promise<PostState | null> {
        const request = this.lastRequest.get(id);
        if (!request) return null;
        return this.post(id, request);
    }

    private async post(id: string, request: LabelRequest): Promise<PostState> {
        this.states.set(id, "pending");
        try {
            await this.api.postLabel(request);
            this.states.set(id, "saved");
            this.counts[request.label] += 1;
            return "saved";
        } catch {
            this.states.set(id, "failed");
            return "failed";
        }
    }
}
