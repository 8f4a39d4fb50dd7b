"""Regenerate tests/data/oracle_values.json from the reference oracles.

Run from the repository root: ``python3 tests/freeze_oracles.py``.
"""

import json
from pathlib import Path

import oracles as o

OUT = Path(__file__).parent / "data" / "oracle_values.json"


def main():
    v = {
        "sqd_100_200_300": o.sqd([100, 200, 300], [110, 190, 310]),
        "mape_100_200_300": o.mape([100, 200, 300], [110, 190, 310]),
        "tadj_10_10": o.tadj([10, 10], [12, 10]),
        "sqd_10_10": o.sqd([10, 10], [12, 10]),
        "future_sqd_40_50": o.future("SQD", [1, 2, 3, 40, 50], [1, 2, 3, 44, 53], 3, 5),
        "eprime_sqd_13_7": o.sqd([10, 10], [13, 7]),
        "eprime_mape_11_18": o.mape([10, 20], [11, 18]),
        "e_star_10_20": o.mape([10, 20], [11, 18]),
        "e_star_single": o.mape([10], [30]),
        "mape_e_example": o.mape_e([10, 10, 10], [11, 9, 10]),
        "mape_f_middle": o.mape_f([4, 8, 2], [1, 10, 3]),
        "r2_flat": o.r_squared([1, 2, 3], [2, 2, 2]),
        "k_real_15_80": [o.k_real_brute(k, 15, 80) for k in (0, 1, 15)],
        "fair_two_on_one": o.fair_share_finish([10, 10], 1, 1),
        "fair_mixed": o.fair_share_finish([10, 20, 40], 1, 2),
        "transfer_1MiB": 1048576 / 1048576 + 0.001,
        "dedicated_two_vms": o.dedicated_order([[[(5, "C5")], [(7, "C7")]]]),
        "dedicated_reversed": o.dedicated_order([[[(9, "slow")], [(3, "fast")]], [[(1, "tail")]]]),
        "filter_budget_60_756": int(60 / 0.756) if 60 / 0.756 != int(60 / 0.756) else int(60 / 0.756) - 1,
        "phi_two_points": o.phi(0.0, [10.0, 20.0], [5.0, 7.0], [0.0, 100.0], [6.0, 6.0], 15.0, 30.0),
    }
    OUT.parent.mkdir(exist_ok=True)
    OUT.write_text(json.dumps(v, indent=2, sort_keys=True) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
