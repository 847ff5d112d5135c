/** Poll a server-side optimization job to completion.
 *
 * Jobs run seconds to minutes, so the status endpoint is polled at 1 Hz
 * rather than holding a connection open.
 */

import type { JobDoc } from "./types.js";

export class JobFailedError extends Error {
  constructor(
    readonly job: JobDoc,
    message: string,
  ) {
    super(message);
    this.name = "JobFailedError";
  }
}

export class JobTimeoutError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "JobTimeoutError";
  }
}

export interface PollOptions {
  intervalMs?: number;
  timeoutMs?: number;
  onProgress?: (job: JobDoc) => void;
  /** Injectable for tests; defaults to a setTimeout sleep. */
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export async function pollJob(
  api: { getJob(id: string): Promise<JobDoc> },
  jobId: string,
  opts: PollOptions = {},
): Promise<JobDoc> {
  const interval = opts.intervalMs ?? 1000;
  const timeout = opts.timeoutMs ?? 10 * 60 * 1000;
  const sleep = opts.sleep ?? defaultSleep;

  let waited = 0;
  for (;;) {
    const job = await api.getJob(jobId);
    opts.onProgress?.(job);
    if (job.state === "done") return job;
    if (job.state === "failed") {
      throw new JobFailedError(job, job.error ?? "optimization failed");
    }
    if (waited >= timeout) {
      throw new JobTimeoutError(`job ${jobId} still ${job.state} after ${waited} ms`);
    }
    await sleep(interval);
    waited += interval;
  }
}
