"""
Closed-loop comparison of controllers
=====================================

Run the tank heater for two minutes under a few controllers on the same flow
realization and compare the realized average objective. The command-line
equivalent is ``hybridgp compare --scenario sn --duration 120``.
"""

from hybridgp import ScenarioSpec, SimConfig, compare_controllers

base = SimConfig(scenario=ScenarioSpec("SN", duration=120.0), seed=0)
table = compare_controllers(base, ["Perfect", "FixedRange", "KC", "Hybrid"], seeds=[0])

print(f"{'controller':12s} {'avg J':>8s} {'vs Perfect':>10s} {'violation':>10s} {'NAR share':>9s}")
for row in table.rows:
    print(f"{row['controller']:12s} {row['avg_objective_mean']:8.2f} "
          f"{row['normalized_objective']:10.3f} {row['violation_degree_seconds_mean']:10.2f} "
          f"{row['switch_fraction_NAR_mean']:9.2f}")
