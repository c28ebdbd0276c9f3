// Box overlays: normalized [0,1] box coordinates from the API mapped to
// pixel rectangles on the displayed image and back.

import type { Box } from "./api.js";

export interface PixelRect {
    left: number;
    top: number;
    width: number;
    height: number;
}

export function boxToRect(box: Box, displayW: number, displayH: number): PixelRect {
    return {
        left: (box.cx - box.w / 2) * displayW,
        top: (box.cy - box.h / 2) * displayH,
        width: box.w * displayW,
        height: box.h * displayH,
    };
}

export function rectToBox(rect: PixelRect, displayW: number, displayH: number): Box {
    return {
        cx: (rect.left + rect.width / 2) / displayW,
        cy: (rect.top + rect.height / 2) / displayH,
        w: rect.width / displayW,
        h: rect.height / displayH,
    };
}
