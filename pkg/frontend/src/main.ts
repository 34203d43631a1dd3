// Entry point: wires the annotator panel and the ops console to the gateway
// the page was served from. All state shown here is rehydrated from GET
// endpoints plus the event stream, so a browser refresh is harmless.

import { AnnotationTask, GatewayClient } from './api.js';
import {
    AnnotatorController,
    AnnotatorView,
    BudgetView,
    renderPalette,
    renderTaskSvg,
} from './annotator.js';
import {
    EventStream,
    MetricsHistory,
    METRIC_KEYS,
    OpsState,
    initialOpsState,
    reduceEvent,
    renderSeriesSvg,
} from './ops.js';

const client = new GatewayClient('');
const $ = (id: string) => document.getElementById(id) as HTMLElement;

let controller: AnnotatorController | null = null;
let stream: EventStream | null = null;
let opsState: OpsState = initialOpsState();
const history = new MetricsHistory();
let experimentId: string | null = null;
let pollTimer: number | null = null;

function toast(message: string): void {
    const el = $('toast');
    el.textContent = message;
    el.classList.add('visible');
    window.setTimeout(() => el.classList.remove('visible'), 2500);
}

function renderOps(): void {
    const badge = $('source-badge');
    badge.textContent = opsState.source;
    badge.dataset.source = opsState.source;
    $('run-state').textContent = opsState.done
        ? 'done'
        : opsState.failed
          ? 'failed'
          : opsState.paused
            ? 'paused'
            : 'running';
    for (const key of METRIC_KEYS) {
        $(`chart-${key}`).innerHTML = renderSeriesSvg(history.series[key]);
    }
}

const annotatorView: AnnotatorView = {
    showTask(task: AnnotationTask) {
        $('task-frame').innerHTML = renderTaskSvg(task);
        $('task-meta').textContent =
            `task ${task.task_id} | frame ${task.frame_index} | ` +
            `model: class ${task.predicted_class} @ ${task.predicted_score.toFixed(3)}`;
        $('palette').innerHTML = renderPalette(task.num_classes, task.predicted_class);
        $('annotator-state').textContent = '';
        if (controller) {
            $('sparkline').innerHTML = controller.confidence.renderSparkline();
        }
    },
    showIdle() {
        $('annotator-state').textContent = 'no pending tasks, retrying';
        window.setTimeout(() => void controller?.advance(), 1000);
    },
    showExhausted() {
        $('annotator-state').textContent = 'labor budget exhausted';
        $('palette').innerHTML = '';
    },
    showConflict(taskId: string) {
        toast(`task ${taskId} was already labeled elsewhere`);
    },
    updateBudget(view: BudgetView) {
        const meter = $('budget-meter') as unknown as HTMLProgressElement;
        meter.max = view.total;
        meter.value = view.used;
        $('budget-text').textContent = `${view.remaining} / ${view.total} labels left`;
    },
};

async function pollMetrics(): Promise<void> {
    if (!experimentId) return;
    try {
        const report = await client.getMetrics(experimentId);
        history.sample(report, Date.now() / 1000);
        renderOps();
    } catch {
        // the chart just skips a sample while the gateway is unreachable
    }
}

async function startExperiment(): Promise<void> {
    const raw = ($('config') as HTMLTextAreaElement).value || '{}';
    let config: Record<string, unknown>;
    try {
        config = JSON.parse(raw);
    } catch {
        toast('config is not valid JSON');
        return;
    }
    config['mode'] = 'live';
    try {
        const created = await client.createExperiment(config);
        experimentId = created.experiment_id;
    } catch (err) {
        toast(String(err));
        return;
    }
    $('experiment-id').textContent = experimentId;
    opsState = initialOpsState();
    const status = await client.getStatus(experimentId);
    controller = new AnnotatorController(client, experimentId, annotatorView, status.tau);
    stream?.stop();
    stream = new EventStream(client, experimentId, (event) => {
        opsState = reduceEvent(opsState, event);
        renderOps();
    });
    void stream.run();
    if (pollTimer !== null) window.clearInterval(pollTimer);
    pollTimer = window.setInterval(() => void pollMetrics(), 1000);
    void controller.advance();
}

function wireControls(): void {
    $('start').addEventListener('click', () => void startExperiment());
    for (const action of ['pause', 'resume', 'kill_cloud', 'restore_cloud'] as const) {
        $(`ctl-${action}`).addEventListener('click', () => {
            if (experimentId) void client.control(experimentId, action);
        });
    }
    $('palette').addEventListener('click', (ev) => {
        const target = (ev.target as HTMLElement).closest('.class-btn') as HTMLElement | null;
        if (target && controller) void controller.label(Number(target.dataset.classId));
    });
    document.addEventListener('keydown', (ev) => {
        const k = Number(ev.key);
        if (controller && controller.current && k >= 1 && k <= controller.current.num_classes) {
            void controller.label(k - 1);
        }
    });
}

wireControls();
