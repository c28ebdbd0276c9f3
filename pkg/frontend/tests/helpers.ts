// Shared fake fetch: records requests and plays back queued responses.

export interface Captured {
    url: string;
    method: string;
    body: unknown;
}

export class FakeFetch {
    captured: Captured[] = [];
    private queue: Array<{ status: number; body: unknown }> = [];
    failNext = false;

    respondWith(body: unknown, status = 200): void {
        this.queue.push({ status, body });
    }

    fn = async (url: string, init?: RequestInit): Promise<Response> => {
        if (this.failNext) {
            this.failNext = false;
            throw new TypeError("network down");
        }
        this.captured.push({
            url,
            method: init?.method ?? "GET",
            body: init?.body ? JSON.parse(init.body as string) : null,
        });
        const next = this.queue.shift() ?? { status: 200, body: { ok: true } };
        return new Response(JSON.stringify(next.body), {
            status: next.status,
            headers: { "content-type": "application/json" },
        });
    };
}
