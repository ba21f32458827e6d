# A full simulated day-in-the-life: terminals produce data, meet, reach
# the internet now and then, and sometimes die. Measures how much the
# peer layer actually saves, and whether the estimator's predictions
# match realized restores.
# Run: python demos/05_end_to_end.py

from oppbak import calibration_check, config_from_dict, run, run_batch

scenario = {
    "seed": 42,
    "horizon_s": 7200.0,
    "payload_mode": False,
    "terminals": {"count": 20, "producers": 6, "quota_bytes": 400_000,
                  "base_reliability": 0.85, "backup_peers": "nonproducers"},
    "workload": {"items_per_hour": 5.0, "size_min_bytes": 300,
                 "size_max_bytes": 4000, "priority_min": 0.6,
                 "priority_max": 0.95, "n": 4, "k": 2},
    "mobility": {"encounter_rate_per_hour": 80.0,
                 "contact_duration_mean_s": 20.0,
                 "bandwidth_bytes_per_s": 25_000.0},
    "infrastructure": {"window_rate_per_hour": 0.25,
                       "window_duration_mean_s": 45.0,
                       "bandwidth_bytes_per_s": 250_000.0},
    "failures": {"rate_per_hour": 0.4, "targets": "producers"},
}

# -- one run, with an event trace ------------------------------------------------
trace = []
report = run(config_from_dict(scenario), trace=trace.append)
print(f"one seeded run: {report.items_produced} items, "
      f"loss ratio {report.loss_ratio:.3f}")
counts = {}
for outcome in report.outcomes.values():
    counts[outcome] = counts.get(outcome, 0) + 1
for outcome, count in sorted(counts.items()):
    print(f"  {outcome:<24}{count}")
print(f"  bytes to peers / server: {report.bytes_to_peers} / {report.bytes_to_server}")
print("\nfirst trace lines:")
for line in trace[:6]:
    print(f"  {line}")

# -- does the peer layer help? 60 seeds each way ---------------------------------
enabled = run_batch(config_from_dict(scenario), 60)
disabled = run_batch(config_from_dict({**scenario, "peer_backup": False}), 60)
a = enabled.metrics["loss_ratio"]
b = disabled.metrics["loss_ratio"]
print(f"\nloss ratio with peers:    {a['mean']:.3f}  [{a['ci_low']:.3f}, {a['ci_high']:.3f}]")
print(f"loss ratio without peers: {b['mean']:.3f}  [{b['ci_low']:.3f}, {b['ci_high']:.3f}]")

# -- were the predictions honest? -------------------------------------------------
result = calibration_check(enabled)
print(f"\ncalibration over {result.episodes} failure episodes:")
for bin_stat in result.bins:
    print(f"  predicted [{bin_stat.lo:.1f},{bin_stat.hi:.1f}): "
          f"n={bin_stat.count:4d} mean prediction {bin_stat.mean_predicted:.3f} "
          f"realized {bin_stat.realized_rate:.3f}")
