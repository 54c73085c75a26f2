"""Walk a UAV outward from the base station and watch the link chain react.

Prints a table of distance, elevation, LOS probability, path loss, and
achievable rate, then renders the rate profile at three altitudes to
demos/out/channel_sweep.svg.
"""

import os

from uavfl.channel import ChannelEnvironment, Position, link_sample
from uavfl.svgchart import emit_svg_chart

OUT_DIR = os.path.join(os.path.dirname(__file__), "out")


def main():
    env = ChannelEnvironment()
    bs = Position(0.0, 0.0, 20.0)
    k_db = 3.4  # midpoint of the Rician-factor range used in the simulator

    print(f"{'x [m]':>7} {'alt [m]':>8} {'dist [m]':>9} {'elev [deg]':>11} "
          f"{'P_LOS':>7} {'PL [dB]':>9} {'rate [Mbps]':>12}")
    series = []
    for alt in (30.0, 60.0, 100.0):
        xs, ys = [], []
        for x in range(10, 401, 10):
            s = link_sample(Position(float(x), 0.0, alt), bs, k_db, 0.2, env)
            xs.append(float(x))
            ys.append(s.rate_bps / 1e6)
            if x % 80 == 0:
                print(f"{x:>7} {alt:>8.0f} {s.distance_m:>9.1f} "
                      f"{s.elevation_deg:>11.2f} {s.p_los:>7.3f} "
                      f"{s.path_loss_db:>9.1f} {s.rate_bps / 1e6:>12.3f}")
        series.append((f"altitude {alt:.0f} m", xs, ys))

    os.makedirs(OUT_DIR, exist_ok=True)
    path = os.path.join(OUT_DIR, "channel_sweep.svg")
    emit_svg_chart(series, "horizontal distance [m]", "uplink rate [Mbps]",
                   path, title="Air-to-ground link rate vs distance")
    print(f"\nwrote {path}")
    print("higher altitude buys LOS probability at short range but pays "
          "path loss at long range")


if __name__ == "__main__":
    main()
