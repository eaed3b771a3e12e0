/** Spawns the real synthesis service for integration tests. */

import { spawn, spawnSync, type ChildProcess } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";

const MAKE_CKPT = `
import sys
from cips.generator import Generator, GeneratorConfig
cfg = GeneratorConfig(width=32, n_blocks=3, fourier_dim=32, embed_dim=32,
                      H=16, W=16, latent_dim=32, mapping_depth=2,
                      mapping_hidden=32, kind="cylindrical")
Generator(cfg, seed=0).save(sys.argv[1])
`;

const RUN_SERVICE = `
import sys
import uvicorn
from cips.service import create_app
uvicorn.run(create_app(sys.argv[1]), host="127.0.0.1", port=int(sys.argv[2]),
            log_level="warning")
`;

function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const srv = createServer();
    srv.listen(0, "127.0.0.1", () => {
      const addr = srv.address();
      if (addr && typeof addr === "object") {
        const port = addr.port;
        srv.close(() => resolve(port));
      } else {
        srv.close(() => reject(new Error("no port assigned")));
      }
    });
  });
}

export interface ServiceHandle {
  base: string;
  stop: () => void;
}

export async function startService(): Promise<ServiceHandle> {
  const dir = mkdtempSync(join(tmpdir(), "cips-ui-test-"));
  const ckpt = join(dir, "fixture.tnsr");
  const made = spawnSync("python3", ["-c", MAKE_CKPT, ckpt], { encoding: "utf-8" });
  if (made.status !== 0) {
    throw new Error(`fixture checkpoint failed: ${made.stderr}`);
  }
  const port = await freePort();
  const proc: ChildProcess = spawn("python3", ["-c", RUN_SERVICE, ckpt, String(port)], {
    stdio: ["ignore", "ignore", "pipe"],
  });
  let stderr = "";
  proc.stderr?.on("data", (chunk) => (stderr += chunk));
  const base = `http://127.0.0.1:${port}`;

  const deadline = Date.now() + 30_000;
  for (;;) {
    if (proc.exitCode !== null) {
      throw new Error(`service exited with ${proc.exitCode}: ${stderr}`);
    }
    try {
      const resp = await fetch(`${base}/healthz`);
      if (resp.ok) break;
    } catch {
      /* not listening yet */
    }
    if (Date.now() > deadline) {
      proc.kill();
      throw new Error(`service did not come up in 30s: ${stderr}`);
    }
    await new Promise((r) => setTimeout(r, 120));
  }
  return {
    base,
    stop: () => {
      proc.kill("SIGTERM");
      rmSync(dir, { recursive: true, force: true });
    },
  };
}
