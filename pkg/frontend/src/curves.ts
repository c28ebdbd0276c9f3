// Loss/F1 curve handling: CSV parsing, the saturation rule and the
// saturation-window mean drawn on the dashboard.

export interface CurvePoint {
    iteration: number;
    value: number;
}

export function parseCurveCsv(text: string): CurvePoint[] {
    const rows: CurvePoint[] = [];
    const lines = text.split("\n");
    for (let i = 1; i < lines.length; i++) { // skip header
        const line = lines[i].trim();
        if (!line) continue;
        const [it, value] = line.split(",");
        rows.push({ iteration: Number(it), value: Number(value) });
    }
    return rows;
}

function trailingSlope(values: number[], end: number, window: number): number {
    // least-squares slope of values[end-window+1 .. end] against 0..window-1
    const xMean = (window - 1) / 2;
    let num = 0;
    let den = 0;
    let yMean = 0;
    for (let k = 0; k < window; k++) yMean += values[end - window + 1 + k];
    yMean /= window;
    for (let k = 0; k < window; k++) {
        num += (k - xMean) * (values[end - window + 1 + k] - yMean);
        den += (k - xMean) * (k - xMean);
    }
    return num / den;
}

// Earliest checkpoint whose trailing-window slope stays within the
// tolerance through the end of the curve; null when it never settles.
// Mirrors the service-side rule so the dashboard marker lands on the
// same iteration the pipeline reports.
export function detectSaturation(
    curve: CurvePoint[],
    window = 10,
    slopeTol = 0.002,
): number | null {
    const values = curve.map((p) => p.value);
    const n = values.length;
    if (n < 2 * window) return null;
    let stableFrom: number | null = null;
    for (let i = n - 1; i >= window - 1; i--) {
        if (Math.abs(trailingSlope(values, i, window)) <= slopeTol) {
            stableFrom = i;
        } else {
            break;
        }
    }
    return stableFrom === null ? null : curve[stableFrom].iteration;
}

export function meanFrom(curve: CurvePoint[], fromIteration: number): number {
    const tail = curve.filter((p) => p.iteration >= fromIteration);
    if (tail.length === 0) return NaN;
    return tail.reduce((acc, p) => acc + p.value, 0) / tail.length;
}
