// Console view state. The render spec is restricted to the four
// supported representations; everything else is reconstructed from the
// API on reload.

import type { RenderChoice } from "./api.js";

export const RENDER_CHOICES: readonly RenderChoice[] = [
    { colormap: "jet", scale: "linear" },
    { colormap: "jet", scale: "log" },
    { colormap: "grayscale", scale: "linear" },
    { colormap: "grayscale", scale: "log" },
];

export type ViewName = "label" | "dashboard" | "review";

export interface ViewState {
    view: ViewName;
    page: number;
    pageSize: number;
    render: RenderChoice;
    overlay: { family: string; iteration: number; threshold: number } | null;
    selectionName: string | null;
    online: boolean;
}

export function initialState(): ViewState {
    return {
        view: "label",
        page: 0,
        pageSize: 12,
        render: RENDER_CHOICES[0],
        overlay: null,
        selectionName: null,
        online: true,
    };
}

export function isSupportedRender(choice: RenderChoice): boolean {
    return RENDER_CHOICES.some(
        (r) => r.colormap === choice.colormap && r.scale === choice.scale,
    );
}
