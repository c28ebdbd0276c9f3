// Minimal canvas line charts for the training dashboard.

import type { CurvePoint } from "./curves.js";

export interface ChartMarks {
    verticalAt?: number | null;   // iteration (saturation marker)
    horizontalAt?: number | null; // value (window-mean line)
}

export function drawCurve(
    canvas: HTMLCanvasElement,
    points: CurvePoint[],
    title: string,
    marks: ChartMarks = {},
): void {
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    const { width, height } = canvas;
    ctx.clearRect(0, 0, width, height);
    ctx.fillStyle = "#202830";
    ctx.fillRect(0, 0, width, height);
    ctx.fillStyle = "#9fb3c8";
    ctx.font = "12px sans-serif";
    ctx.fillText(title, 8, 14);
    if (points.length < 2) return;

    const pad = { left: 42, right: 8, top: 22, bottom: 18 };
    const xs = points.map((p) => p.iteration);
    const ys = points.map((p) => p.value);
    const xMin = Math.min(...xs);
    const xMax = Math.max(...xs);
    const yMin = Math.min(0, ...ys);
    const yMax = Math.max(...ys) * 1.05 || 1;
    const px = (x: number) =>
        pad.left + ((x - xMin) / (xMax - xMin || 1)) * (width - pad.left - pad.right);
    const py = (y: number) =>
        height - pad.bottom -
        ((y - yMin) / (yMax - yMin || 1)) * (height - pad.top - pad.bottom);

    ctx.strokeStyle = "#41506033";
    ctx.beginPath();
    for (let g = 0; g <= 4; g++) {
        const y = py(yMin + ((yMax - yMin) * g) / 4);
        ctx.moveTo(pad.left, y);
        ctx.lineTo(width - pad.right, y);
    }
    ctx.stroke();
    ctx.fillStyle = "#64788c";
    for (let g = 0; g <= 4; g++) {
        const v = yMin + ((yMax - yMin) * g) / 4;
        ctx.fillText(v.toFixed(2), 4, py(v) + 4);
    }

    ctx.strokeStyle = "#58b7ff";
    ctx.lineWidth = 1.4;
    ctx.beginPath();
    points.forEach((p, i) => {
        if (i === 0) ctx.moveTo(px(p.iteration), py(p.value));
        else ctx.lineTo(px(p.iteration), py(p.value));
    });
    ctx.stroke();

    if (marks.verticalAt != null) {
        ctx.strokeStyle = "#e8eaed";
        ctx.setLineDash([5, 4]);
        ctx.beginPath();
        ctx.moveTo(px(marks.verticalAt), pad.top);
        ctx.lineTo(px(marks.verticalAt), height - pad.bottom);
        ctx.stroke();
        ctx.setLineDash([]);
    }
    if (marks.horizontalAt != null && Number.isFinite(marks.horizontalAt)) {
        ctx.strokeStyle = "#ff6b6b";
        ctx.beginPath();
        ctx.moveTo(pad.left, py(marks.horizontalAt));
        ctx.lineTo(width - pad.right, py(marks.horizontalAt));
        ctx.stroke();
    }
}
