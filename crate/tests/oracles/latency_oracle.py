"""Independent recomputation of the latency model for the three-board testbed.

Plain arithmetic with fractions, no shared code with the Rust crate. The
printed values are frozen into the acceptance suite.

    python3 tests/oracles/latency_oracle.py
"""

from fractions import Fraction as F

ROWS, SPLIT, CLIENTS, EPOCHS = 2000, F(4, 5), 10, 5
PARAMS, FEATURES, BITS = 1988, 8, 64
BASE_RATE, BANDWIDTH = F(200), F(25, 2)
SERVER_BW, SERVER_SPEED = F(25, 2), F(10**6)

# (clock GHz, clients); rates scale with clock from the 1.2 GHz board
BOARDS = [(F(12, 10), 2), (F(15, 10), 3), (F(18, 10), 5)]

train_rows = int(ROWS * SPLIT)
per_client = train_rows // CLIENTS
payload_mb = F(PARAMS * BITS, 10**6)

sums = []
rates = []
for ghz, n in BOARDS:
    rate = BASE_RATE * ghz / F(12, 10)
    rates.append(rate)
    t_local = F(per_client) / rate * EPOCHS
    t_intra = n * t_local
    t_comm = payload_mb / BANDWIDTH
    sums.append(t_local + t_intra + t_comm)

t_agg = len(BOARDS) * payload_mb / SERVER_BW
t_update = F(PARAMS) / SERVER_SPEED
total = max(sums) + t_agg + t_update
per_round = sum(sums)
test_mb = F(FEATURES * BITS, 10**6)
latency_ms = sum(1 / r + test_mb / BANDWIDTH for r in rates) * 1000

for i, s in enumerate(sums):
    print(f"cluster_{i}_sum_s      {float(s):.10f}")
print(f"t_server_agg_s       {float(t_agg):.10f}")
print(f"t_server_update_s    {float(t_update):.10f}")
print(f"total_training_s     {float(total):.10f}")
print(f"time_per_round_s     {float(per_round):.10f}")
print(f"testing_latency_ms   {float(latency_ms):.10f}")
