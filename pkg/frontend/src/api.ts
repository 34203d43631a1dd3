// Typed client for the vpaas gateway HTTP API. The UI is a pure consumer of
// these endpoints; every piece of state it shows comes from a response or an
// event on the ndjson stream.

export type LabelRecord = {
    frame: number;
    bbox: [number, number, number, number];
    class: number | null;
    source: string;
    timestamp: number;
    score: number;
};

export type ChunkEvent = {
    type: 'chunk';
    chunk_id: number;
    strategy: string;
    n_keyframes: number;
    bytes_client_fog: number;
    bytes_fog_cloud: number;
    bytes_cloud_fog: number;
    extra_video_bytes: number;
    cloud_invocations: number;
    cloud_frames: number;
    source: string;
    uncertain_count: number;
    timestamps: { [name: string]: number };
    labels: LabelRecord[];
    labeled_count: number;
    remaining_budget: number;
};

export type AnnotationEvent = {
    type: 'annotation';
    task_id: string;
    class_id: number;
    labeled_count: number;
    remaining_budget: number;
    finalized: boolean;
};

export type ControlEvent = { type: 'control'; action: string };
export type StatusEvent = { type: 'status'; status: 'done' | 'failed' };
export type GatewayEvent = ChunkEvent | AnnotationEvent | ControlEvent | StatusEvent;

export type FrameContext = {
    frame_index: number;
    width: number;
    height: number;
    labels: { bbox: [number, number, number, number]; class_id: number | null; source: string }[];
};

export type AnnotationTask = {
    task_id: string;
    frame_index: number;
    region: [number, number, number, number];
    predicted_class: number;
    predicted_score: number;
    state: string;
    remaining_budget: number;
    num_classes: number;
    frame: FrameContext;
};

export type LabelReceipt = {
    task_id: string;
    class_id: number;
    labeled_count: number;
    remaining_budget: number;
    finalized: boolean;
    timestamp: number;
    checkpoint_hash: string;
};

export type MetricsReport = {
    strategy: string;
    normalized_bandwidth: number;
    f1: number;
    cloud_cost: number;
    latency_p50: number;
    latency_p90: number;
    partial?: boolean;
    [key: string]: unknown;
};

export type ExperimentStatus = {
    experiment_id: string;
    status: 'running' | 'paused' | 'done' | 'failed';
    mode: string;
    strategy: string;
    chunks_done: number;
    chunks_total: number;
    labeled_count: number;
    tau: number;
    cloud_forced_down: boolean;
};

export type ApiErrorBody = { errors: { code: string; field: string | null; message: string }[] };

export class ApiError extends Error {
    constructor(
        public readonly status: number,
        public readonly body: ApiErrorBody,
    ) {
        super(body.errors.map((e) => e.message).join('; ') || `HTTP ${status}`);
    }

    get code(): string {
        return this.errors[0]?.code ?? 'unknown';
    }

    get errors() {
        return this.body.errors ?? [];
    }
}

export type ControlAction = 'pause' | 'resume' | 'kill_cloud' | 'restore_cloud' | 'set_policy';

export class GatewayClient {
    constructor(
        private readonly base: string = '',
        private readonly fetchFn: typeof fetch = fetch,
    ) {}

    private async request<T>(path: string, init?: RequestInit): Promise<T> {
        const res = await this.fetchFn(`${this.base}${path}`, init);
        if (!res.ok) {
            let body: ApiErrorBody = { errors: [] };
            try {
                body = (await res.json()) as ApiErrorBody;
            } catch {
                // non-JSON error body; keep the empty error list
            }
            throw new ApiError(res.status, body);
        }
        return (await res.json()) as T;
    }

    private post<T>(path: string, body: unknown): Promise<T> {
        return this.request<T>(path, {
            method: 'POST',
            headers: { 'content-type': 'application/json' },
            body: JSON.stringify(body),
        });
    }

    createExperiment(config: Record<string, unknown>): Promise<{ experiment_id: string; status: string }> {
        return this.post('/experiments', config);
    }

    getStatus(experimentId: string): Promise<ExperimentStatus> {
        return this.request(`/experiments/${experimentId}`);
    }

    getMetrics(experimentId: string): Promise<MetricsReport> {
        return this.request(`/experiments/${experimentId}/metrics`);
    }

    /** Claims the next pending annotation task; null when the queue is idle. */
    async nextTask(experimentId: string): Promise<AnnotationTask | null> {
        const res = await this.fetchFn(`${this.base}/experiments/${experimentId}/annotations/next`);
        if (res.status === 204) return null;
        if (!res.ok) throw new ApiError(res.status, (await res.json()) as ApiErrorBody);
        return (await res.json()) as AnnotationTask;
    }

    submitLabel(taskId: string, classId: number): Promise<LabelReceipt> {
        return this.post(`/annotations/${taskId}`, { class_id: classId });
    }

    control(experimentId: string, action: ControlAction, extra?: Record<string, unknown>) {
        return this.post<{ experiment_id: string; status: string; action: string }>(
            `/experiments/${experimentId}/control`,
            { action, ...extra },
        );
    }

    /**
     * Reads the line-delimited JSON event stream, invoking onEvent per line.
     * Resolves when the server closes the stream (experiment finished) and
     * rejects on transport errors so the caller can reconnect.
     */
    async streamEvents(
        experimentId: string,
        onEvent: (event: GatewayEvent) => void,
        signal?: AbortSignal,
    ): Promise<void> {
        const res = await this.fetchFn(`${this.base}/experiments/${experimentId}/events`, { signal });
        if (!res.ok || !res.body) throw new ApiError(res.status, { errors: [] });
        const reader = res.body.getReader();
        const decoder = new TextDecoder();
        let buffer = '';
        for (;;) {
            const { done, value } = await reader.read();
            if (value) buffer += decoder.decode(value, { stream: true });
            const lines = buffer.split('\n');
            buffer = lines.pop() ?? '';
            for (const line of lines) {
                if (line.trim()) onEvent(JSON.parse(line) as GatewayEvent);
            }
            if (done) return;
        }
    }
}
