import numpy as np
import pytest

from cvxreg.rng import SplitMix64, derive


def test_reference_vector_seed_zero():
    g = SplitMix64(0)
    assert [g.next_u64() for _ in range(3)] == [
        0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


def test_vectorized_draws_match_scalar_draws():
    a = SplitMix64(42)
    b = SplitMix64(42)
    block = a.u64(5)
    assert [int(v) for v in block] == [b.next_u64() for _ in range(5)]
    assert a.state == b.state


def test_uniform_uses_top_53_bits():
    u = SplitMix64(0).uniform(1)[0]
    assert u == (0xE220A8397B1DCDAF >> 11) * 2.0 ** -53


def test_normal_is_box_muller():
    u1, u2 = SplitMix64(9).uniform(2)
    z = SplitMix64(9).normal(2)
    r = np.sqrt(-2 * np.log(1 - u1))
    np.testing.assert_allclose(z, [r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])


def test_normal_moments():
    z = SplitMix64(1).normal(200_000)
    assert abs(z.mean()) < 0.01 and abs(z.std() - 1) < 0.01


@pytest.mark.parametrize("n", [0, 1, 2, 17])
def test_permutation_is_a_permutation(n):
    p = SplitMix64(5).permutation(n)
    assert sorted(p.tolist()) == list(range(n))


def test_permutation_is_fisher_yates():
    u = SplitMix64(11).uniform(3)
    perm = list(range(4))
    for t, i in enumerate(range(3, 0, -1)):
        j = int(u[t] * (i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    assert SplitMix64(11).permutation(4).tolist() == perm


def test_derive_separates_streams():
    seeds = {derive(0, r) for r in range(100)}
    assert len(seeds) == 100
    assert derive(3, 1, 2) == derive(3, 1, 2) != derive(3, 2, 1)
