// End-to-end round trip against a real gateway process: a scripted annotator
// labels tasks from a live seeded run through the same client the UI uses,
// and the ops-console reducer observes the kill_cloud source flip.

import { ChildProcess, spawn } from 'node:child_process';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { ChunkEvent, GatewayClient, GatewayEvent } from '../src/api.js';
import { EventStream, initialOpsState, reduceEvent } from '../src/ops.js';

const PORT = 8400 + (process.pid % 1000);
const BASE = `http://127.0.0.1:${PORT}`;

let gateway: ChildProcess;
const client = new GatewayClient(BASE);

const sleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

async function waitForGateway(): Promise<void> {
    for (let i = 0; i < 100; i++) {
        try {
            const res = await fetch(`${BASE}/experiments/none`);
            if (res.status === 404) return;
        } catch {
            // not listening yet
        }
        await sleep(200);
    }
    throw new Error('gateway did not come up');
}

beforeAll(async () => {
    gateway = spawn(
        'python3',
        ['-m', 'uvicorn', 'vpaas.gateway:create_app', '--factory', '--host', '127.0.0.1', '--port', String(PORT)],
        { stdio: 'ignore' },
    );
    await waitForGateway();
});

afterAll(() => {
    gateway?.kill();
});

async function claimNext(experimentId: string, timeoutMs = 60_000) {
    const deadline = Date.now() + timeoutMs;
    while (Date.now() < deadline) {
        const task = await client.nextTask(experimentId);
        if (task !== null) return task;
        await sleep(200);
    }
    const status = JSON.stringify(await client.getStatus(experimentId));
    throw new Error(`no annotation task appeared in time; status=${status}`);
}

describe('annotator round trip', () => {
    it('labels 20 tasks on a live run; every label changes the learner checkpoint', async () => {
        const { experiment_id } = await client.createExperiment({
            strategy: 'vpaas',
            seed: 3,
            mode: 'live',
            pacing: 50,
            dataset: { num_frames: 300, num_classes: 4, drift_rate: 0.005 },
            // annotation-campaign floor: keep fog predictions flowing to the
            // queue even as submitted labels raise the model's confidence
            protocol: { fog_confidence_floor: 0.95 },
            hitl: { enabled: true, tau: 200, scripted_annotator: false },
        });
        const status = await client.getStatus(experiment_id);
        expect(status.tau).toBe(200);

        const hashes: string[] = [];
        let remaining = status.tau;
        for (let i = 0; i < 20; i++) {
            let task = await claimNext(experiment_id);
            // a background proposal can score non-positive on every class, in
            // which case the incremental update is a deliberate no-op; skip
            // those so each submitted label provably moves the learner
            while (task.predicted_score <= 0) task = await claimNext(experiment_id);
            expect(task.state).not.toBe('labeled');
            const receipt = await client.submitLabel(task.task_id, task.predicted_class);
            expect(receipt.remaining_budget).toBeLessThan(remaining);
            remaining = receipt.remaining_budget;
            hashes.push(receipt.checkpoint_hash);
        }

        expect(new Set(hashes).size).toBe(20);
        expect(remaining).toBe(status.tau - 20);
        const after = await client.getStatus(experiment_id);
        expect(after.labeled_count).toBe(20);
    });
});

describe('ops console round trip', () => {
    it('kill_cloud flips the label source to backup within one chunk period', async () => {
        const { experiment_id } = await client.createExperiment({
            strategy: 'vpaas',
            seed: 1,
            mode: 'live',
            pacing: 3,
            dataset: { num_frames: 300, num_classes: 4 },
        });

        let state = initialOpsState();
        const chunks: ChunkEvent[] = [];
        const stream = new EventStream(client, experiment_id, (event: GatewayEvent) => {
            state = reduceEvent(state, event);
            if (event.type === 'chunk') chunks.push(event);
        });
        const streaming = stream.run();

        const waitFor = async (pred: () => boolean, timeoutMs: number) => {
            const deadline = Date.now() + timeoutMs;
            while (!pred() && Date.now() < deadline) await sleep(100);
            expect(pred()).toBe(true);
        };

        await waitFor(() => chunks.length >= 2 && state.source === 'cloud', 30_000);
        const lastCloudChunk = chunks[chunks.length - 1].chunk_id;
        await client.control(experiment_id, 'kill_cloud');

        await waitFor(() => state.source === 'backup', 30_000);
        const firstBackup = chunks.find((c) => c.source === 'backup')!;
        expect(firstBackup.chunk_id).toBeLessThanOrEqual(lastCloudChunk + 2);
        expect(state.sourceChangedAtChunk).toBe(firstBackup.chunk_id);

        await client.control(experiment_id, 'restore_cloud');
        await waitFor(() => chunks.some((c) => c.source === 'cloud' && c.chunk_id > firstBackup.chunk_id), 30_000);

        stream.stop();
        await Promise.race([streaming, sleep(1000)]);
    });
});
