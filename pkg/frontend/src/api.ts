// Typed client for the spihits HTTP API. The console keeps no canonical
// state of its own: everything shown is reconstructed from these calls.

export type Colormap = "jet" | "grayscale";
export type IntensityScale = "linear" | "log";

// The four supported data representations.
export interface RenderChoice {
    colormap: Colormap;
    scale: IntensityScale;
}

export interface Box {
    cx: number;
    cy: number;
    w: number;
    h: number;
}

export type LabelKind = "single" | "non_single";

export interface LabelState {
    label: LabelKind;
    box: Box | null;
    timestamp: string;
}

export interface PredictionState {
    label: LabelKind;
    author: string;
    timestamp: string;
}

export interface PatternRow {
    id: string;
    split: string | null;
    truth: LabelKind | null;
    label: LabelState | null;
    prediction: PredictionState | null;
}

export interface PatternPage {
    total: number;
    offset: number;
    patterns: PatternRow[];
}

export interface LabelRequest {
    id: string;
    label: LabelKind;
    box?: Box;
    author?: string;
}

export interface TrainRequest {
    iterations?: number;
    batch_size?: number;
    checkpoint_every?: number;
    input_size?: number;
    colormap?: Colormap;
    scale?: IntensityScale;
    seed?: number;
    threshold?: number;
}

export type JobState = "idle" | "running" | "finished" | "failed";

export interface TrainStatus {
    state: JobState;
    job_id: string | null;
    family: string | null;
    iteration: number;
    latest_loss: number | null;
    latest_f1: number | null;
    error: string | null;
}

export interface TrainCurves {
    family: string;
    loss: string; // CSV text: iteration,loss
    f1: string;   // CSV text: iteration,f1
}

export interface Detection {
    row: number;
    col: number;
    cx: number;
    cy: number;
    w: number;
    h: number;
    objectness: number;
}

export interface DetectionReport {
    id: string;
    is_single_hit: boolean;
    threshold: number;
    detections: Detection[];
}

export interface SelectionDoc {
    method: string;
    threshold: number | null;
    ids: string[];
}

export class ApiError extends Error {
    constructor(public status: number, message: string) {
        super(message);
    }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
    constructor(
        private base: string = "",
        private fetchFn: FetchLike = (input, init) => fetch(input, init),
    ) {}

    private async request<T>(path: string, init?: RequestInit): Promise<T> {
        const response = await this.fetchFn(this.base + path, init);
        if (!response.ok) {
            let detail = response.statusText;
            try {
                const body = await response.json();
                detail = body.detail ?? body.error ?? detail;
            } catch {
                // non-JSON error body; keep the status text
            }
            throw new ApiError(response.status, detail);
        }
        return (await response.json()) as T;
    }

    listPatterns(offset: number, limit: number): Promise<PatternPage> {
        return this.request(`/api/patterns?offset=${offset}&limit=${limit}`);
    }

    imageUrl(id: string, spec: RenderChoice): string {
        return (
            `${this.base}/api/patterns/${encodeURIComponent(id)}/image.png` +
            `?colormap=${spec.colormap}&scale=${spec.scale}`
        );
    }

    postLabel(body: LabelRequest): Promise<{ ok: boolean }> {
        return this.request("/api/labels", {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify(body),
        });
    }

    startTrain(body: TrainRequest): Promise<{ job: string; family: string }> {
        return this.request("/api/train", {
            method: "POST",
            headers: { "content-type": "application/json" },
            body: JSON.stringify(body),
        });
    }

    trainStatus(): Promise<TrainStatus> {
        return this.request("/api/train/status");
    }

    trainCurves(family?: string): Promise<TrainCurves> {
        const q = family ? `?family=${encodeURIComponent(family)}` : "";
        return this.request(`/api/train/curves${q}`);
    }

    getSelection(name: string): Promise<SelectionDoc> {
        return this.request(`/api/selections/${encodeURIComponent(name)}`);
    }

    listSelections(): Promise<{ selections: string[] }> {
        return this.request("/api/selections");
    }

    detections(
        id: string,
        family: string,
        iteration: number,
        threshold: number,
    ): Promise<DetectionReport> {
        return this.request(
            `/api/patterns/${encodeURIComponent(id)}/detections` +
            `?family=${encodeURIComponent(family)}&iteration=${iteration}` +
            `&threshold=${threshold}`,
        );
    }

    metrics(selection: string, reference: string): Promise<{
        machine: Record<string, number | null>;
        human: Record<string, string | number>;
    }> {
        return this.request(
            `/api/metrics?selection=${encodeURIComponent(selection)}` +
            `&reference=${encodeURIComponent(reference)}`,
        );
    }
}
