// Console entry point: label grid, training dashboard and selection
// review, all talking to the HTTP API and holding no state that a page
// reload would lose.

import { ApiClient, PatternRow, RenderChoice } from "./api.js";
import { drawCurve } from "./chart.js";
import { detectSaturation, meanFrom, parseCurveCsv } from "./curves.js";
import { LabelSession } from "./labeler.js";
import { boxToRect } from "./overlay.js";
import { initialState, RENDER_CHOICES, ViewState } from "./state.js";

const api = new ApiClient("");
const state: ViewState = initialState();
const session = new LabelSession(api);

const root = document.getElementById("app")!;
const banner = document.getElementById("banner")!;

function setOnline(online: boolean): void {
    state.online = online;
    banner.hidden = online;
    root.classList.toggle("offline", !online);
}

function renderChoiceLabel(r: RenderChoice): string {
    return `${r.colormap} / ${r.scale}`;
}

function nav(): HTMLElement {
    const el = document.createElement("nav");
    for (const view of ["label", "dashboard", "review"] as const) {
        const b = document.createElement("button");
        b.textContent = view;
        b.className = state.view === view ? "active" : "";
        b.onclick = () => {
            state.view = view;
            render();
        };
        el.appendChild(b);
    }
    const spec = document.createElement("select");
    for (const [i, choice] of RENDER_CHOICES.entries()) {
        const opt = document.createElement("option");
        opt.value = String(i);
        opt.textContent = renderChoiceLabel(choice);
        if (choice.colormap === state.render.colormap &&
            choice.scale === state.render.scale) {
            opt.selected = true;
        }
        spec.appendChild(opt);
    }
    spec.onchange = () => {
        state.render = RENDER_CHOICES[Number(spec.value)];
        render(); // image URLs change query params; the grid reloads
    };
    el.appendChild(spec);
    const counts = document.createElement("span");
    counts.className = "counts";
    counts.textContent =
        `labeled: ${session.counts.single} single / ` +
        `${session.counts.non_single} non-single`;
    el.appendChild(counts);
    return el;
}

// -- label grid --------------------------------------------------------------

function badge(text: string, cls: string): HTMLElement {
    const span = document.createElement("span");
    span.className = `badge ${cls}`;
    span.textContent = text;
    return span;
}

function labelCard(row: PatternRow): HTMLElement {
    const card = document.createElement("figure");
    card.className = "card";
    card.tabIndex = 0;
    const img = document.createElement("img");
    img.src = api.imageUrl(row.id, state.render);
    img.alt = row.id;
    card.appendChild(img);
    const cap = document.createElement("figcaption");
    cap.textContent = row.id;
    if (row.label) cap.appendChild(badge(row.label.label, row.label.label));
    if (row.prediction) {
        cap.appendChild(badge(`model: ${row.prediction.label}`, "model"));
    }
    const postState = session.states.get(row.id);
    if (postState === "failed") {
        const retry = badge("retry", "failed");
        retry.onclick = async (ev) => {
            ev.stopPropagation();
            await session.retry(row.id);
            render();
        };
        cap.appendChild(retry);
    } else if (postState === "pending") {
        cap.appendChild(badge("saving", "pending"));
    }
    card.appendChild(cap);
    card.onkeydown = async (ev) => {
        const result = await session.handleKey(row.id, ev.key);
        if (result !== null) {
            setOnline(result !== "failed" ? true : state.online);
            render();
        }
    };
    card.onclick = () => card.focus();
    return card;
}

async function labelView(container: HTMLElement): Promise<void> {
    let page;
    try {
        page = await api.listPatterns(state.page * state.pageSize, state.pageSize);
        setOnline(true);
    } catch {
        setOnline(false);
        return;
    }
    const grid = document.createElement("div");
    grid.className = "grid";
    for (const row of page.patterns) grid.appendChild(labelCard(row));
    container.appendChild(grid);

    const pager = document.createElement("div");
    pager.className = "pager";
    const prev = document.createElement("button");
    prev.textContent = "prev";
    prev.disabled = state.page === 0;
    prev.onclick = () => { state.page -= 1; render(); };
    const next = document.createElement("button");
    next.textContent = "next";
    next.disabled = (state.page + 1) * state.pageSize >= page.total;
    next.onclick = () => { state.page += 1; render(); };
    const info = document.createElement("span");
    info.textContent =
        `page ${state.page + 1} of ${Math.max(1, Math.ceil(page.total / state.pageSize))}` +
        ` (${page.total} patterns) - focus a card, press "s" = single, "x" = not`;
    pager.append(prev, next, info);
    container.appendChild(pager);
}

// -- training dashboard -------------------------------------------------------

let pollTimer: number | null = null;
let lastIteration = -1;

async function dashboardView(container: HTMLElement): Promise<void> {
    let status;
    try {
        status = await api.trainStatus();
        setOnline(true);
    } catch {
        setOnline(false);
        return;
    }

    const controls = document.createElement("div");
    controls.className = "controls";
    const startBtn = document.createElement("button");
    startBtn.textContent = "start training";
    startBtn.disabled = status.state === "running";
    startBtn.onclick = async () => {
        try {
            await api.startTrain({
                colormap: state.render.colormap,
                scale: state.render.scale,
            });
        } catch (err) {
            alert(String(err));
        }
        render();
    };
    controls.appendChild(startBtn);
    const line = document.createElement("p");
    if (status.state === "failed") {
        line.className = "error";
        line.textContent =
            `job failed at iteration ${status.iteration}: ${status.error}`;
    } else if (status.state === "idle" && !status.family) {
        line.textContent = "no training job yet - press start";
    } else {
        lastIteration = Math.max(lastIteration, status.iteration);
        const loss = status.latest_loss?.toFixed(4) ?? "-";
        const f1 = status.latest_f1?.toFixed(3) ?? "-";
        line.textContent =
            `${status.state}: family ${status.family ?? "?"}, iteration ` +
            `${status.iteration}, loss ${loss}, validation F1 ${f1}`;
    }
    controls.appendChild(line);
    container.appendChild(controls);

    const lossCanvas = document.createElement("canvas");
    lossCanvas.width = 640;
    lossCanvas.height = 220;
    const f1Canvas = document.createElement("canvas");
    f1Canvas.width = 640;
    f1Canvas.height = 220;
    container.append(lossCanvas, f1Canvas);

    try {
        const curves = await api.trainCurves(status.family ?? undefined);
        const loss = parseCurveCsv(curves.loss);
        const f1 = parseCurveCsv(curves.f1);
        drawCurve(lossCanvas, loss, `training loss (${curves.family})`);
        const saturation = detectSaturation(f1);
        drawCurve(f1Canvas, f1, "validation F1 per checkpoint", {
            verticalAt: saturation,
            horizontalAt: saturation === null ? null : meanFrom(f1, saturation),
        });
    } catch {
        // no curves yet: leave the empty charts
    }

    if (status.state === "running" && pollTimer === null) {
        pollTimer = window.setTimeout(() => {
            pollTimer = null;
            if (state.view === "dashboard") render();
        }, 2000);
    }
}

// -- selection review ---------------------------------------------------------

async function reviewCard(id: string): Promise<HTMLElement> {
    const card = document.createElement("figure");
    card.className = "card review";
    const wrap = document.createElement("div");
    wrap.className = "overlay-wrap";
    const img = document.createElement("img");
    img.src = api.imageUrl(id, state.render);
    img.alt = id;
    wrap.appendChild(img);
    card.appendChild(wrap);
    const cap = document.createElement("figcaption");
    cap.textContent = id;
    card.appendChild(cap);

    if (state.overlay) {
        try {
            const report = await api.detections(
                id, state.overlay.family, state.overlay.iteration,
                state.overlay.threshold,
            );
            img.onload = () => {
                const w = img.clientWidth;
                const h = img.clientHeight;
                for (const det of report.detections) {
                    const rect = boxToRect(det, w, h);
                    const div = document.createElement("div");
                    div.className = "det-box";
                    div.style.left = `${rect.left}px`;
                    div.style.top = `${rect.top}px`;
                    div.style.width = `${rect.width}px`;
                    div.style.height = `${rect.height}px`;
                    div.title = `objectness ${det.objectness.toFixed(3)}`;
                    wrap.appendChild(div);
                }
            };
            if (report.detections.length) {
                cap.appendChild(badge(
                    `obj ${report.detections[0].objectness.toFixed(2)}`, "model",
                ));
            }
        } catch {
            cap.appendChild(badge("no detections", "pending"));
        }
    }

    const accept = document.createElement("button");
    accept.textContent = "accept (single)";
    accept.onclick = async () => {
        await session.handleKey(id, "s");
        render();
    };
    const reject = document.createElement("button");
    reject.textContent = "reject";
    reject.onclick = async () => {
        await session.handleKey(id, "x");
        render();
    };
    cap.append(accept, reject);
    return card;
}

async function reviewView(container: HTMLElement): Promise<void> {
    const form = document.createElement("div");
    form.className = "controls";
    const input = document.createElement("input");
    input.placeholder = "selection name";
    input.value = state.selectionName ?? "";
    const family = document.createElement("input");
    family.placeholder = "family for overlays";
    family.value = state.overlay?.family ?? "";
    const iteration = document.createElement("input");
    iteration.placeholder = "iteration";
    iteration.type = "number";
    iteration.value = state.overlay ? String(state.overlay.iteration) : "";
    const load = document.createElement("button");
    load.textContent = "load";
    load.onclick = () => {
        state.selectionName = input.value.trim() || null;
        state.overlay = family.value.trim() && iteration.value
            ? {
                family: family.value.trim(),
                iteration: Number(iteration.value),
                threshold: 0.24,
            }
            : null;
        render();
    };
    form.append(input, family, iteration, load);
    container.appendChild(form);

    if (!state.selectionName) {
        const p = document.createElement("p");
        p.textContent = "enter a selection name to review";
        container.appendChild(p);
        return;
    }
    let doc;
    try {
        doc = await api.getSelection(state.selectionName);
        setOnline(true);
    } catch (err) {
        const p = document.createElement("p");
        p.className = "error";
        p.textContent = `selection not found: ${state.selectionName}`;
        container.appendChild(p);
        return;
    }
    const head = document.createElement("p");
    head.textContent =
        `${doc.ids.length} single hits by ${doc.method} ` +
        `(threshold ${doc.threshold ?? "-"})`;
    container.appendChild(head);
    if (doc.ids.length === 0) {
        const p = document.createElement("p");
        p.textContent = "empty selection";
        container.appendChild(p);
        return;
    }
    const grid = document.createElement("div");
    grid.className = "grid";
    for (const id of doc.ids.slice(0, 24)) {
        grid.appendChild(await reviewCard(id));
    }
    container.appendChild(grid);
}

// -- root render ---------------------------------------------------------------

async function render(): Promise<void> {
    root.textContent = "";
    root.appendChild(nav());
    const container = document.createElement("main");
    root.appendChild(container);
    if (state.view === "label") await labelView(container);
    else if (state.view === "dashboard") await dashboardView(container);
    else await reviewView(container);
}

render();
