// Operations console logic: reduces the gateway event stream into chart
// series and a label-source badge, and keeps the stream connected with
// exponential backoff. No metric is computed client-side; the four metric
// series are sampled from GET /metrics and chunk events are used only for
// the source badge and per-chunk annotations on the charts.

import { ChunkEvent, GatewayClient, GatewayEvent, MetricsReport } from './api.js';

export type MetricPoint = { t: number; value: number };

export const METRIC_KEYS = ['normalized_bandwidth', 'f1', 'cloud_cost', 'latency_p50'] as const;
export type MetricKey = (typeof METRIC_KEYS)[number];

export class MetricsHistory {
    readonly series: Record<MetricKey, MetricPoint[]> = {
        normalized_bandwidth: [],
        f1: [],
        cloud_cost: [],
        latency_p50: [],
    };

    sample(report: MetricsReport, t: number): void {
        for (const key of METRIC_KEYS) {
            this.series[key].push({ t, value: Number(report[key]) });
        }
    }
}

export type OpsState = {
    source: string;
    sourceChangedAtChunk: number | null;
    lastChunkId: number | null;
    labeledCount: number;
    remainingBudget: number | null;
    finalized: boolean;
    paused: boolean;
    done: boolean;
    failed: boolean;
};

export function initialOpsState(): OpsState {
    return {
        source: 'none',
        sourceChangedAtChunk: null,
        lastChunkId: null,
        labeledCount: 0,
        remainingBudget: null,
        finalized: false,
        paused: false,
        done: false,
        failed: false,
    };
}

/** Pure event reducer; the badge flips the moment a chunk reports a new source. */
export function reduceEvent(state: OpsState, event: GatewayEvent): OpsState {
    switch (event.type) {
        case 'chunk': {
            const chunk = event as ChunkEvent;
            return {
                ...state,
                source: chunk.source,
                sourceChangedAtChunk:
                    chunk.source !== state.source ? chunk.chunk_id : state.sourceChangedAtChunk,
                lastChunkId: chunk.chunk_id,
                labeledCount: chunk.labeled_count,
                remainingBudget: chunk.remaining_budget,
            };
        }
        case 'annotation':
            return {
                ...state,
                labeledCount: event.labeled_count,
                remainingBudget: event.remaining_budget,
                finalized: event.finalized,
            };
        case 'control':
            if (event.action === 'pause') return { ...state, paused: true };
            if (event.action === 'resume') return { ...state, paused: false };
            return state;
        case 'status':
            return { ...state, done: event.status === 'done', failed: event.status === 'failed' };
    }
}

/** Polyline path for a metric series, scaled into the given box. */
export function renderSeriesSvg(
    points: MetricPoint[],
    width = 320,
    height = 80,
): string {
    if (points.length === 0) return `<svg viewBox="0 0 ${width} ${height}"></svg>`;
    const tMin = points[0].t;
    const tMax = Math.max(points[points.length - 1].t, tMin + 1e-9);
    const vMax = Math.max(...points.map((p) => p.value), 1e-9);
    const coords = points
        .map((p) => {
            const x = ((p.t - tMin) / (tMax - tMin)) * (width - 4) + 2;
            const y = height - 2 - (p.value / vMax) * (height - 8);
            return `${x.toFixed(1)},${y.toFixed(1)}`;
        })
        .join(' ');
    return (
        `<svg viewBox="0 0 ${width} ${height}">` +
        `<polyline points="${coords}" fill="none" stroke="#81c784" stroke-width="1.5"/>` +
        `<text x="4" y="12" class="chart-max">${vMax.toPrecision(3)}</text></svg>`
    );
}

/** Reconnect delays in milliseconds: 500ms doubling up to a 10s ceiling. */
export function* backoffDelays(baseMs = 500, capMs = 10_000): Generator<number> {
    let delay = baseMs;
    for (;;) {
        yield delay;
        delay = Math.min(delay * 2, capMs);
    }
}

const sleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

/**
 * Keeps one event-stream connection alive until the experiment finishes.
 * A clean server close (experiment done) ends the loop; transport errors
 * trigger a reconnect with backoff, resetting the delay after any success.
 */
export class EventStream {
    private stopped = false;

    constructor(
        private readonly client: GatewayClient,
        private readonly experimentId: string,
        private readonly onEvent: (event: GatewayEvent) => void,
        private readonly sleepFn: (ms: number) => Promise<void> = sleep,
    ) {}

    async run(): Promise<void> {
        let delays = backoffDelays();
        while (!this.stopped) {
            let received = false;
            try {
                await this.client.streamEvents(this.experimentId, (event) => {
                    received = true;
                    this.onEvent(event);
                });
                return;
            } catch {
                if (this.stopped) return;
                if (received) delays = backoffDelays();
                await this.sleepFn(delays.next().value);
            }
        }
    }

    stop(): void {
        this.stopped = true;
    }
}
