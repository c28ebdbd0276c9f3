import { describe, expect, it } from "vitest";

import { detectSaturation, meanFrom, parseCurveCsv } from "../src/curves.js";

const LOSS_CSV = "iteration,loss\n1,2.5\n2,1.75\n3,1.5\n";

describe("curve CSV parsing", () => {
    it("dashboard rows equal the endpoint CSV row-for-row", () => {
        const rows = parseCurveCsv(LOSS_CSV);
        expect(rows).toEqual([
            { iteration: 1, value: 2.5 },
            { iteration: 2, value: 1.75 },
            { iteration: 3, value: 1.5 },
        ]);
        // re-serializing loses nothing
        const back = ["iteration,loss"]
            .concat(rows.map((r) => `${r.iteration},${r.value}`))
            .join("\n") + "\n";
        expect(back).toBe(LOSS_CSV);
    });

    it("tolerates trailing newlines and empty text", () => {
        expect(parseCurveCsv("iteration,f1\n")).toEqual([]);
        expect(parseCurveCsv("")).toEqual([]);
    });
});

describe("saturation marker", () => {
    const curve = (values: number[]) =>
        values.map((v, i) => ({ iteration: 100 * (i + 1), value: v }));

    it("flat curve saturates at the first eligible checkpoint", () => {
        expect(detectSaturation(curve(Array(30).fill(0.8)))).toBe(1000);
    });

    it("steadily rising curve never saturates", () => {
        const rising = curve(Array.from({ length: 30 }, (_, i) => 0.01 * i));
        expect(detectSaturation(rising)).toBeNull();
    });

    it("knee curve saturates within a window of the knee", () => {
        const values = Array.from({ length: 40 }, (_, i) =>
            Math.min(0.08 * i, 0.8));
        const got = detectSaturation(curve(values));
        expect(got).not.toBeNull();
        expect(Math.abs((got as number) - 2100)).toBeLessThanOrEqual(1000);
    });

    it("short curves yield no marker", () => {
        expect(detectSaturation(curve([0.5, 0.5, 0.5]))).toBeNull();
    });

    it("window mean covers the saturated region only", () => {
        const values = [0, 0, 0, 0, 0.8, 0.8, 0.8, 0.8];
        expect(meanFrom(curve(values), 500)).toBeCloseTo(0.8);
    });
});
