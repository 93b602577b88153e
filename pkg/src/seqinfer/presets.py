"""Built-in experiment configurations, addressable by name on the command line."""

TABLE_MU = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.6]
KNOWN_METHODS = ["exact", "hybrid", "normal_R0", "boot_R0", "normal_R1", "boot_R1", "normal_R"]
RST = {"g": "quadratic", "a": 4.5, "n0": 75, "n1": 15}
RST_STUDENTIZED = {"g": "studentized", "a": 4.5, "n0": 75, "n1": 15, "map": "square", "variance": "estimated"}

PRESETS = {
    "table1": {
        "scenario": {"g": {"name": "smoothed_abs", "delta": 0.5}, "a": 9, "n0": 72, "n1": 1},
        "population": {"variant": "normal"},
        "mu_list": [0.0, 0.25, 0.5, 0.75, 1.0],
    },
    "table2": {
        "scenario": RST,
        "population": {"variant": "normal"},
        "mu_list": TABLE_MU,
        "methods": KNOWN_METHODS,
    },
    "table3": {
        "scenario": RST,
        "population": {"variant": "mixture"},
        "mu_list": TABLE_MU,
        "methods": KNOWN_METHODS,
    },
    "table4-normal": {
        "scenario": RST_STUDENTIZED,
        "population": {"variant": "normal"},
        "mu_list": TABLE_MU,
        "methods": ["t_R0", "t_R1", "boot_R1"],
    },
    "table4-mixture": {
        "scenario": RST_STUDENTIZED,
        "population": {"variant": "mixture"},
        "mu_list": TABLE_MU,
        "methods": ["t_R0", "t_R1", "boot_R1"],
    },
}
