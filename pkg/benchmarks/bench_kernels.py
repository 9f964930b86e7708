"""Compiled vs numpy MP_G flooding kernel.

    python3 benchmarks/bench_kernels.py [--n 16 --m 16 --paths 2 --qam 16qam --rounds 5]

Builds one detection graph, runs identical flooding rounds through both
backends, checks that the messages agree and prints the time per round.
"""

import argparse
import time

import numpy as np

from otfs_jrc.channel import ONE_WAY, make_scenario
from otfs_jrc.detectors import build_graph
from otfs_jrc.detectors.mp_g import singleton_logs
from otfs_jrc.grid import FrameParams, draw_frame, get_constellation
from otfs_jrc.kernels import compiled, fallback
from otfs_jrc.modem import build_channel, transmit


def setup(args):
    params = FrameParams.standard(n_doppler=args.n, m_delay=args.m)
    rng = np.random.default_rng(args.seed)
    c = get_constellation(args.qam)
    ps = make_scenario(params, args.paths, rng=rng, mode=ONE_WAY)
    ch = build_channel(ps, params)
    s2 = 10 ** (-args.snr_db / 10)
    y = transmit(draw_frame(params, c, rng), ch, s2, rng)
    thr = args.prune * float(np.abs(ch.gram).max())
    return build_graph(ch, y, s2, prune_threshold=thr), c


def time_backend(be, graph, c, rounds):
    pts = c.points
    log_f = singleton_logs(graph, c)
    E, Q = graph.n_edges, pts.size
    msg_i, msg_j = np.zeros((E, Q)), np.zeros((E, Q))
    log_v = log_f.copy()
    w = -(2.0 / graph.sigma_w2) * graph.g_edge
    ei = np.ascontiguousarray(graph.ei, dtype=np.intp)
    ej = np.ascontiguousarray(graph.ej, dtype=np.intp)
    t0 = time.perf_counter()
    for _ in range(rounds):
        be.flood(ei, ej, w, pts, log_v, msg_i, msg_j, 0.0, None)
        be.accumulate(log_f, ei, ej, msg_i, msg_j, log_v)
    return (time.perf_counter() - t0) / rounds, log_v


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--m", type=int, default=16)
    ap.add_argument("--paths", type=int, default=2)
    ap.add_argument("--qam", default="16qam")
    ap.add_argument("--snr-db", type=float, default=15.0)
    ap.add_argument("--prune", type=float, default=1e-3)
    ap.add_argument("--rounds", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    graph, c = setup(args)
    terms = 2 * graph.n_edges * c.size ** 2
    print(f"N={args.n} M={args.m} P={args.paths} {args.qam}: {graph.n_edges} edges, "
          f"{terms / 1e6:.1f}M pair terms per round")
    t_np, v_np = time_backend(fallback, graph, c, args.rounds)
    print(f"numpy   {t_np * 1e3:9.2f} ms/round  ({terms / t_np / 1e6:7.1f} Mterm/s)")
    if compiled is None:
        print("cython  not built")
        return
    t_cy, v_cy = time_backend(compiled, graph, c, args.rounds)
    print(f"cython  {t_cy * 1e3:9.2f} ms/round  ({terms / t_cy / 1e6:7.1f} Mterm/s)")
    print(f"speedup {t_np / t_cy:.1f}x, max |log V| difference {np.max(np.abs(v_np - v_cy)):.2e}")


if __name__ == "__main__":
    main()
