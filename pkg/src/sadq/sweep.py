"""Grid sweeps over the mixing factor, action bonus, and model-update ratio."""

import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

from sadq.config import config_from_dict
from sadq.trainer import Trainer


@dataclass
class CellResult:
    alpha: float
    beta: float
    k: int
    seed: int
    status: str          # "ok" or "error: ..."
    final_eval: float
    best_eval: float
    run_dir: str

    def row(self):
        return (f"{self.alpha},{self.beta},{self.k},{self.seed},"
                f"{self.status},{self.final_eval!r},{self.best_eval!r}")


SUMMARY_HEADER = "alpha,beta,k,seed,status,final_eval,best_eval"


def _cell_dir(out_dir, alpha, beta, k, seed):
    return os.path.join(out_dir, f"alpha{alpha}-beta{beta}-k{k}",
                        f"seed{seed}")


def _run_cell(cfg_dict, seed, run_dir):
    cfg = config_from_dict(cfg_dict)
    trainer = Trainer(cfg, seed, out_dir=run_dir)
    try:
        result = trainer.run()
    finally:
        trainer.close()
    return float(result.final_eval), float(result.best_eval)


def sweep(base_cfg, out_dir, alphas=None, betas=None, ks=None, seeds=None,
          workers=1):
    """Run every (alpha, beta, k) x seed combination under out_dir.

    Each cell trains in its own directory with its own metrics file; a
    summary CSV collects final and best evaluation return per cell. A
    failing cell is recorded and does not stop the others.
    """
    alphas = list(alphas) if alphas else [base_cfg.alpha]
    betas = list(betas) if betas else [base_cfg.beta]
    ks = list(ks) if ks else [base_cfg.k]
    seeds = list(seeds) if seeds else list(base_cfg.seeds)
    cells = [(a, b, k, s) for a, b, k in itertools.product(alphas, betas, ks)
             for s in seeds]
    os.makedirs(out_dir, exist_ok=True)

    jobs = []
    for a, b, k, s in cells:
        cfg = base_cfg.replace(alpha=a, beta=b, k=k, seeds=(s,)).validate()
        jobs.append((a, b, k, s, cfg.to_dict(), _cell_dir(out_dir, a, b, k, s)))

    results = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_cell, d, s, rd)
                       for (_, _, _, s, d, rd) in jobs]
            for (a, b, k, s, _, rd), fut in zip(jobs, futures):
                results.append(_collect(a, b, k, s, rd, fut.result))
    else:
        for a, b, k, s, d, rd in jobs:
            results.append(_collect(a, b, k, s, rd,
                                    lambda d=d, s=s, rd=rd: _run_cell(d, s, rd)))

    summary_path = os.path.join(out_dir, "summary.csv")
    with open(summary_path, "w") as fh:
        fh.write(SUMMARY_HEADER + "\n")
        for res in results:
            fh.write(res.row() + "\n")
    return results


def _collect(a, b, k, s, run_dir, call):
    try:
        final, best = call()
        return CellResult(a, b, k, s, "ok", final, best, run_dir)
    except Exception as exc:  # record and move on; the sweep must finish
        kind = type(exc).__name__
        return CellResult(a, b, k, s, f"error: {kind}: {exc}",
                          float("nan"), float("nan"), run_dir)
