"""Sweep theta_inf (theta_sum follows as 2 * theta_inf) and print accuracy per setting.

    python scripts/sensitivity_sweep.py --theta-inf 1 2 3 4 5 6
"""

import argparse
from importlib import resources

from rgmem.backend import make_backend, make_judge
from rgmem.config import load_config
from rgmem.evaluation import load_dataset, render_table, run_eval, sweep_configs


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dataset", default=str(resources.files("rgmem") / "data" / "micro_locomo.json"))
    ap.add_argument("--config")
    ap.add_argument("--theta-inf", type=int, nargs="+", default=[2, 3, 4, 5])
    ap.add_argument("--theta-sum", type=int, help="hold theta_sum fixed instead")
    args = ap.parse_args()

    config = load_config(args.config)
    dataset = load_dataset(args.dataset)
    backend, judge = make_backend(config.backend), make_judge(config.backend)
    reports = [
        run_eval(dataset, cfg, backend, judge, label=label)
        for label, cfg in sweep_configs(config, args.theta_inf, args.theta_sum)
    ]
    print(render_table(reports), end="")


if __name__ == "__main__":
    main()
