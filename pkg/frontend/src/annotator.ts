// Annotation panel logic. Frames carry no pixels, so the task is rendered as
// a schematic SVG: boxes already labeled on the frame in their class colors,
// plus the uncertain region highlighted. All rendering helpers are pure
// string builders so they can be tested without a DOM.

import { AnnotationTask, ApiError, GatewayClient, LabelReceipt } from './api.js';

export const CLASS_COLORS = [
    '#e6194b', '#3cb44b', '#4363d8', '#f58231',
    '#911eb4', '#46f0f0', '#f032e6', '#bcf60c',
    '#008080', '#9a6324', '#800000', '#808000',
];

export function classColor(classId: number | null): string {
    if (classId === null || classId < 0) return '#9e9e9e';
    return CLASS_COLORS[classId % CLASS_COLORS.length];
}

function esc(value: string): string {
    return value.replace(/&/g, '&amp;').replace(/</g, '&lt;').replace(/>/g, '&gt;').replace(/"/g, '&quot;');
}

/**
 * Schematic frame: one rect per already-emitted label (class-colored) and the
 * uncertain region as a dashed highlight. Coordinates are frame pixels; the
 * viewBox keeps the aspect ratio so CSS can scale it freely.
 */
export function renderTaskSvg(task: AnnotationTask): string {
    const { width, height, labels } = task.frame;
    const parts: string[] = [];
    parts.push(
        `<svg viewBox="0 0 ${width} ${height}" xmlns="http://www.w3.org/2000/svg" role="img">`,
        `<rect x="0" y="0" width="${width}" height="${height}" fill="#1c1f26"/>`,
    );
    for (const label of labels) {
        const [x, y, w, h] = label.bbox;
        const color = classColor(label.class_id);
        parts.push(
            `<rect x="${x}" y="${y}" width="${w}" height="${h}" fill="${color}" ` +
            `fill-opacity="0.25" stroke="${color}" stroke-width="2" data-source="${esc(label.source)}"/>`,
        );
    }
    const [rx, ry, rw, rh] = task.region;
    parts.push(
        `<rect class="uncertain" x="${rx}" y="${ry}" width="${rw}" height="${rh}" ` +
        `fill="none" stroke="#ffd600" stroke-width="3" stroke-dasharray="8 4"/>`,
        '</svg>',
    );
    return parts.join('');
}

/** Class palette buttons; digit keys 1..K map to class ids 0..K-1. */
export function renderPalette(numClasses: number, predictedClass: number): string {
    const buttons: string[] = [];
    for (let k = 0; k < numClasses; k++) {
        const hint = k === predictedClass ? ' predicted' : '';
        buttons.push(
            `<button class="class-btn${hint}" data-class-id="${k}" ` +
            `style="border-color: ${classColor(k)}">${k + 1}&#8203; class ${k}</button>`,
        );
    }
    return buttons.join('');
}

export type BudgetView = { used: number; remaining: number; total: number; fraction: number };

export function budgetView(remaining: number, total: number): BudgetView {
    const used = total - remaining;
    return {
        used,
        remaining,
        total,
        fraction: total > 0 ? used / total : 1,
    };
}

/** Rolling window of recent model confidences, rendered as a sparkline. */
export class ConfidenceTrack {
    private readonly scores: number[] = [];

    constructor(private readonly capacity: number = 40) {}

    push(score: number): void {
        this.scores.push(score);
        if (this.scores.length > this.capacity) this.scores.shift();
    }

    get points(): readonly number[] {
        return this.scores;
    }

    renderSparkline(width = 160, height = 36): string {
        if (this.scores.length === 0) {
            return `<svg viewBox="0 0 ${width} ${height}"></svg>`;
        }
        const max = Math.max(...this.scores, 1e-9);
        const step = this.scores.length > 1 ? width / (this.scores.length - 1) : 0;
        const pts = this.scores
            .map((s, i) => `${(i * step).toFixed(1)},${(height - (s / max) * (height - 2) - 1).toFixed(1)}`)
            .join(' ');
        return (
            `<svg viewBox="0 0 ${width} ${height}">` +
            `<polyline points="${pts}" fill="none" stroke="#4fc3f7" stroke-width="1.5"/></svg>`
        );
    }
}

export type AnnotatorPhase = 'idle' | 'task' | 'exhausted' | 'stopped';

export interface AnnotatorView {
    showTask(task: AnnotationTask): void;
    showIdle(): void;
    showExhausted(): void;
    showConflict(taskId: string): void;
    updateBudget(view: BudgetView): void;
}

/**
 * Fetch-render-label loop. The server is the arbiter: tasks are claimed
 * exclusively by GET /annotations/next and a second submit for the same task
 * is rejected, which we surface as a toast and move on.
 */
export class AnnotatorController {
    phase: AnnotatorPhase = 'idle';
    current: AnnotationTask | null = null;
    readonly confidence = new ConfidenceTrack();

    constructor(
        private readonly client: GatewayClient,
        private readonly experimentId: string,
        private readonly view: AnnotatorView,
        private readonly tau: number,
    ) {}

    /** Claims the next task, or goes idle when the queue is empty. */
    async advance(): Promise<AnnotatorPhase> {
        if (this.phase === 'exhausted' || this.phase === 'stopped') return this.phase;
        const task = await this.client.nextTask(this.experimentId);
        if (task === null) {
            this.current = null;
            this.phase = 'idle';
            this.view.showIdle();
        } else {
            this.current = task;
            this.phase = 'task';
            this.confidence.push(task.predicted_score);
            this.view.updateBudget(budgetView(task.remaining_budget, this.tau));
            this.view.showTask(task);
        }
        return this.phase;
    }

    /** Submits a label for the current task and claims the next one. */
    async label(classId: number): Promise<LabelReceipt | null> {
        if (this.current === null) return null;
        const taskId = this.current.task_id;
        try {
            const receipt = await this.client.submitLabel(taskId, classId);
            this.view.updateBudget(budgetView(receipt.remaining_budget, this.tau));
            if (receipt.remaining_budget <= 0) {
                this.phase = 'exhausted';
                this.view.showExhausted();
                return receipt;
            }
            await this.advance();
            return receipt;
        } catch (err) {
            if (err instanceof ApiError && err.status === 410) {
                this.phase = 'exhausted';
                this.view.showExhausted();
                return null;
            }
            if (err instanceof ApiError && err.code === 'task_conflict') {
                this.view.showConflict(taskId);
                await this.advance();
                return null;
            }
            throw err;
        }
    }

    stop(): void {
        this.phase = 'stopped';
    }
}
