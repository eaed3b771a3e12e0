/** Per-canvas request gate: debounce, single flight, latest wins.
 *
 * Pointer moves arrive far faster than synthesis; submissions within the
 * debounce window collapse to the newest, at most one request is ever in
 * flight, and a response whose submission has been superseded is dropped
 * without being applied (the newer request fires as soon as the old one
 * settles).
 */

interface Job<T> {
  exec: () => Promise<T>;
  apply: (result: T) => void;
  onError?: (err: unknown) => void;
}

export class RequestGate {
  inFlight = 0;
  /** High-water mark of concurrent requests; the coalescing contract
   * keeps this at 1 no matter how fast submissions arrive. */
  maxInFlight = 0;
  dropped = 0;
  completed = 0;

  private latest: Job<unknown> | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private generation = 0;

  constructor(private debounceMs = 30) {}

  submit<T>(job: Job<T>): void {
    this.latest = job as Job<unknown>;
    this.generation += 1;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      this.fire();
    }, this.debounceMs);
  }

  /** True when neither a timer nor a request is pending. */
  get idle(): boolean {
    return this.timer === null && this.inFlight === 0 && this.latest === null;
  }

  private fire(): void {
    if (this.inFlight > 0 || this.latest === null) return;
    const job = this.latest;
    const gen = this.generation;
    this.latest = null;
    this.inFlight += 1;
    this.maxInFlight = Math.max(this.maxInFlight, this.inFlight);
    job
      .exec()
      .then(
        (result) => {
          if (gen === this.generation) {
            job.apply(result);
          } else {
            this.dropped += 1; // superseded gaze: stale response dropped
          }
        },
        (err) => {
          if (gen === this.generation && job.onError) job.onError(err);
        },
      )
      .finally(() => {
        this.inFlight -= 1;
        this.completed += 1;
        if (this.latest !== null && this.timer === null) this.fire();
      });
  }
}
