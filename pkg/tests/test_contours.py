import numpy as np

from spfnav.contours import extract_contours


def grid(n=121, span=3.0):
    xs = np.linspace(-span, span, n)
    ys = np.linspace(-span, span, n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return xs, ys, X, Y


def test_circle_is_one_closed_loop():
    xs, ys, X, Y = grid()
    loops = extract_contours(xs, ys, X**2 + Y**2, 1.5**2)
    assert len(loops) == 1
    loop = loops[0]
    assert np.array_equal(loop[0], loop[-1])
    radii = np.linalg.norm(loop, axis=1)
    assert np.all(np.abs(radii - 1.5) < 5e-3)


def test_two_blobs_give_two_loops():
    xs, ys, X, Y = grid()
    V = np.minimum((X - 1.5) ** 2 + Y**2, (X + 1.5) ** 2 + Y**2)
    loops = extract_contours(xs, ys, V, 0.64)
    assert len(loops) == 2
    assert all(np.array_equal(lp[0], lp[-1]) for lp in loops)


def test_plane_cut_is_open_chain():
    xs, ys, X, _ = grid()
    loops = extract_contours(xs, ys, X, 0.33)
    assert len(loops) == 1
    assert not np.array_equal(loops[0][0], loops[0][-1])
    assert np.allclose(loops[0][:, 0], 0.33, atol=1e-12)


def test_no_crossing_returns_nothing():
    xs, ys, X, Y = grid()
    assert extract_contours(xs, ys, X**2 + Y**2, 100.0) == []
