import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qcap.channels import (
    ChannelError,
    FlaggedBranch,
    HelperIsometry,
    KrausChannel,
    apply,
    apply_on_subsystems,
    classical_blocks,
    complementary,
    compose,
    controlled_weyl_isometry,
    dephasing,
    erasure,
    flagged_mixture,
    helper_apply,
    helper_output_states,
    identity,
    make_channel,
    random_channel,
    rocket_conditional,
    rocket_phase,
    rocket_sampled,
    sample_twirls,
    swap_isometry,
    tensor,
    tensor_all,
)
from qcap.infomeasures import coherent_information
from qcap.qmat import (
    DensityMatrix,
    PureState,
    basis_vector,
    haar_unitary,
    max_entangled,
    maximally_mixed,
    partial_trace,
    random_density,
    random_pure_state,
    tensor_states,
    von_neumann_entropy,
    weyl,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_make_channel_examples():
    ch = make_channel([np.eye(2)])
    assert ch.dim_in == ch.dim_out == 2
    dep = make_channel([np.diag([1, 0]), np.diag([0, 1])])
    assert dep.n_kraus == 2
    with pytest.raises(ChannelError):
        make_channel([np.diag([1, 0])])
    with pytest.raises(ChannelError):
        make_channel([np.eye(2), np.eye(3)])
    with pytest.raises(ValueError):
        make_channel([])


def test_channel_error_is_value_error():
    assert issubclass(ChannelError, ValueError)


def test_apply_examples(rng):
    rho = random_density((3,), rng)
    assert np.allclose(apply(identity(3), rho).matrix, rho.matrix)
    assert np.allclose(apply(dephasing(3), rho).matrix, np.diag(np.diag(rho.matrix)))
    with pytest.raises(ChannelError):
        apply(identity(2), rho)


def test_apply_on_subsystems_positions(rng):
    a, b, c = random_density((2,), rng), random_density((3,), rng), random_density((2,), rng)
    abc = tensor_states(a, b, c)
    ch = random_channel(3, 4, 2, rng)
    out = apply_on_subsystems(ch, abc, [1])
    assert out.dims == (2, 4, 2)
    assert np.allclose(out.matrix, np.kron(np.kron(a.matrix, apply(ch, b).matrix), c.matrix))
    with pytest.raises(ChannelError):
        apply_on_subsystems(ch, abc, [0])
    with pytest.raises(ChannelError):
        apply_on_subsystems(identity(4), abc, [0, 0])


def test_apply_on_subsystems_reordered_targets(rng):
    s = random_density((2, 3), rng)
    ch = random_channel(6, 2, 3, rng)
    # target order (1, 0) means the channel sees the swapped input
    swapped = DensityMatrix(
        s.matrix.reshape(2, 3, 2, 3).transpose(1, 0, 3, 2).reshape(6, 6), (3, 2)
    )
    assert np.allclose(apply_on_subsystems(ch, s, [1, 0]).matrix, apply(ch, swapped).matrix)


def test_local_channels_commute_and_tensor_matches_sequential(rng):
    for _ in range(10):
        s = random_density((2, 3), rng)
        a, b = random_channel(2, 2, 2, rng), random_channel(3, 2, 3, rng)
        ab = apply_on_subsystems(b, apply_on_subsystems(a, s, [0]), [1])
        ba = apply_on_subsystems(a, apply_on_subsystems(b, s, [1]), [0])
        joint = apply(tensor(a, b), s)
        assert np.allclose(ab.matrix, ba.matrix, atol=1e-10)
        assert np.allclose(ab.matrix, joint.matrix, atol=1e-10)


def test_tensor_is_lazy_and_complete(rng):
    a, b = random_channel(2, 3, 2, rng), random_channel(2, 2, 3, rng)
    t = tensor(a, b)
    assert "kraus" not in t.__dict__
    assert t.in_dims == (2, 2) and t.out_dims == (3, 2)
    k = t.kraus
    assert k.shape == (6, 6, 4)
    assert np.allclose(np.einsum("koi,koj->ij", k.conj(), k), np.eye(4))
    assert tensor_all([a, b]).kraus.shape == k.shape


def test_compose(rng):
    a, b = random_channel(2, 3, 2, rng), random_channel(3, 2, 2, rng)
    rho = random_density((2,), rng)
    assert np.allclose(apply(compose(b, a), rho).matrix, apply(b, apply(a, rho)).matrix)
    with pytest.raises(ChannelError):
        compose(a, a)


def test_complementary_of_identity_is_trivial(rng):
    rho = random_density((3,), rng)
    assert np.allclose(apply(complementary(identity(3)), rho).matrix, [[1.0]])


def test_complementary_erasure_swaps_erasure_probability():
    d, p = 2, 0.3
    phi = max_entangled(d)
    for p in (0.1, 0.3, 0.8):
        fwd = coherent_information(erasure(d, p), phi).value
        assert fwd == pytest.approx((1 - 2 * p) * np.log2(d), abs=1e-9)
        # the environment of E_p sees the input with probability p
        env = coherent_information(complementary(erasure(d, p)), phi).value
        assert env == pytest.approx(-fwd, abs=1e-9)
        other = coherent_information(erasure(d, 1 - p), phi).value
        assert env == pytest.approx(other, abs=1e-9)


def test_double_complementary_preserves_output_entropy(rng):
    ch = random_channel(3, 2, 4, rng)
    cc = complementary(complementary(ch))
    for _ in range(5):
        rho = random_density((3,), rng)
        assert von_neumann_entropy(apply(cc, rho)) == pytest.approx(von_neumann_entropy(apply(ch, rho)), abs=1e-9)


def test_complementary_entropy_symmetry_on_pure_inputs():
    for seed in range(120):
        r = np.random.default_rng(seed)
        din, dout, n = (int(x) for x in r.integers(1, 5, size=3))
        ch = random_channel(din, dout, max(n, -(-din // dout)), r)
        psi = random_pure_state((din,), r).density()
        hb = von_neumann_entropy(apply(ch, psi))
        he = von_neumann_entropy(apply(complementary(ch), psi))
        assert abs(hb - he) <= 1e-7


def test_random_channel_rejects_incomplete_shape(rng):
    with pytest.raises(ChannelError):
        random_channel(4, 2, 1, rng)


def test_random_channels_are_complete():
    for seed in range(120):
        r = np.random.default_rng(seed)
        din, dout, n = (int(x) for x in r.integers(1, 6, size=3))
        if n * dout < din:
            n = -(-din // dout)
        k = random_channel(din, dout, n, r).kraus
        assert np.max(np.abs(np.einsum("koi,koj->ij", k.conj(), k) - np.eye(din))) <= 1e-7


def test_flagged_mixture_structure(rng):
    a, b = identity(2), dephasing(2)
    mix = flagged_mixture([FlaggedBranch(0.3, a, "a"), FlaggedBranch(0.7, b)])
    assert mix.branch_labels == [("a", 0.3), ("1", 0.7)]
    assert mix.dim_out == 4
    rho = random_density((2,), rng)
    out = apply(mix, rho).matrix
    assert np.allclose(out[:2, :2], 0.3 * rho.matrix)
    assert np.allclose(out[2:, 2:], 0.7 * np.diag(np.diag(rho.matrix)))
    assert np.allclose(out[:2, 2:], 0)
    with pytest.raises(ChannelError):
        flagged_mixture([FlaggedBranch(0.5, a)])
    with pytest.raises(ChannelError):
        flagged_mixture([FlaggedBranch(0.5, a), FlaggedBranch(0.5, identity(3))])
    with pytest.raises(ChannelError):
        flagged_mixture([])


def test_flagged_entropy_identity_over_random_instances():
    """H(sum p_i rho_i (+)) = H(p) + sum p_i H(rho_i) for orthogonal blocks."""
    for seed in range(120):
        r = np.random.default_rng(seed)
        n = int(r.integers(2, 4))
        din = int(r.integers(1, 4))
        probs = r.dirichlet(np.ones(n))
        chans = [random_channel(din, dout, din, r) for dout in r.integers(1, 4, size=n)]
        mix = flagged_mixture([FlaggedBranch(p, c) for p, c in zip(probs, chans)])
        rho = random_density((din,), r)
        dense = von_neumann_entropy(apply(mix, rho))
        h_p = -sum(p * np.log2(p) for p in probs if p > 0)
        block = h_p + sum(p * von_neumann_entropy(apply(c, rho)) for p, c in zip(probs, chans))
        assert abs(dense - block) <= 1e-7


def test_tensor_of_flagged_channels_has_product_branches():
    m = flagged_mixture([FlaggedBranch(0.25, identity(2), "E"), FlaggedBranch(0.75, dephasing(2), "R")])
    t = tensor(m, m)
    assert [lab for lab, _ in t.branch_labels] == ["EE", "ER", "RE", "RR"]
    assert sum(p for _, p in t.branch_labels) == pytest.approx(1.0)
    assert t.branch_labels[1][1] == pytest.approx(0.1875)


def test_erasure_examples(rng):
    rho = random_density((3,), rng)
    out = apply(erasure(3, 0.0), rho).matrix
    assert np.allclose(out[:3, :3], rho.matrix) and out[3, 3] == pytest.approx(0)
    flag = np.zeros((4, 4))
    flag[3, 3] = 1
    assert np.allclose(apply(erasure(3, 1.0), rho).matrix, flag)
    mid = apply(erasure(3, 0.4), rho).matrix
    assert np.allclose(mid, 0.6 * np.pad(rho.matrix, ((0, 1), (0, 1))) + 0.4 * flag)
    with pytest.raises(ChannelError):
        erasure(2, 1.5)


def test_rocket_phase_is_diagonal_root_of_unity():
    d = 3
    p = rocket_phase(d)
    w = np.exp(2j * np.pi / d)
    for i in range(d):
        for j in range(d):
            assert p[i * d + j, i * d + j] == pytest.approx(w ** (i * j))


def test_rocket_on_mixed_and_phi_is_transposed_twirl():
    """R^{UV}(pi^C (x) Phi^{AD}) = (V^T (x) dephasing)(Phi)."""
    for d in (2, 3):
        for seed in range(3):
            u, v = sample_twirls(d, 1, seed)[0]
            r = rocket_conditional(d, u, v)
            phi = max_entangled(d).density()
            state = tensor_states(phi, maximally_mixed(d))  # A, D, C
            out = apply_on_subsystems(r, state, [2, 1])  # A, B
            twisted = np.kron(v.T, np.eye(d)) @ phi.matrix @ np.kron(v.T, np.eye(d)).conj().T
            t = twisted.reshape(d, d, d, d)
            expected = np.zeros_like(t)
            for b in range(d):
                expected[:, b, :, b] = t[:, b, :, b]
            assert np.allclose(out.matrix, expected.reshape(d * d, d * d), atol=1e-10)


def test_rocket_with_receiver_holding_the_twirled_partner():
    """With C's partner delivered intact, R (x) id carries log d for any twirls."""
    for d in (2, 3):
        for u, v in sample_twirls(d, 3, seed=d):
            ch = tensor(rocket_conditional(d, u, v), identity(d))
            phi = max_entangled(d)
            state = tensor_states(phi, phi)  # A, D, C, C'
            q = coherent_information(ch, state, [2, 1, 3]).value
            assert q == pytest.approx(np.log2(d), abs=1e-9)


def test_rocket_conditional_validation():
    with pytest.raises(ChannelError):
        rocket_conditional(2, np.ones((2, 2)), np.eye(2))
    with pytest.raises(ChannelError):
        rocket_conditional(2, np.eye(3), np.eye(3))


def test_sample_twirls_reproducible_and_prefix_stable():
    a = sample_twirls(3, 4, 11)
    b = sample_twirls(3, 2, 11)
    for (u1, v1), (u2, v2) in zip(a, b):
        assert np.array_equal(u1, u2) and np.array_equal(v1, v2)
    c = sample_twirls(3, 1, 12)
    assert not np.allclose(a[0][0], c[0][0])


def test_rocket_sampled_structure():
    r = rocket_sampled(2, 3, seed=5)
    assert len(r.branches) == 3
    assert r.in_dims == (2, 2)
    assert r.dim_out == 6
    with pytest.raises(ChannelError):
        rocket_sampled(2, 0)


def test_controlled_weyl_applies_indexed_unitary():
    d = 3
    iso = controlled_weyl_isometry(d)
    w = iso.w.reshape(d, d * d, d * d, d)
    psi = random_pure_state((d,), np.random.default_rng(0)).amplitudes
    for x in range(d):
        for z in range(d):
            a = basis_vector(d * d, x * d + z)
            out = np.tensordot(w, np.kron(a, psi).reshape(d * d, d), axes=([2, 3], [0, 1]))
            assert np.allclose(out, np.outer(weyl(d, x, z) @ psi, a))


def test_swap_isometry_exchanges_registers():
    d = 2
    iso = swap_isometry(d)
    r = np.random.default_rng(1)
    phi = random_pure_state((d * d,), r).amplitudes
    psi = random_pure_state((d,), r).amplitudes
    out = (iso.w @ np.kron(phi, psi)).reshape(d, d * d)
    assert np.allclose(out, np.outer(psi, phi))


def test_helper_isometry_validation():
    with pytest.raises(ChannelError):
        HelperIsometry(np.ones((4, 4)), 2, 2, 2, 2)
    with pytest.raises(ChannelError):
        HelperIsometry(np.eye(4), 2, 2, 2, 1)
    with pytest.raises(ChannelError):
        controlled_weyl_isometry(1)
    ch = swap_isometry(2).as_channel()
    assert isinstance(ch, KrausChannel) and ch.n_kraus == 1


def test_helper_output_examples():
    d = 3
    eta = max_entangled(d)
    inp = PureState(np.kron(basis_vector(d * d, 0), basis_vector(d * d, 0)), (d * d, d * d))
    out = helper_output_states([swap_isometry(d), swap_isometry(d)], [inp], eta)[0]
    assert out.dims == (d, 2, d, 2)
    # SWAP hands over the halves of Phi^{E1 E2}
    red = partial_trace(out, [0, 2])
    assert np.allclose(red.matrix, eta.density().matrix)
    out1 = helper_output_states([controlled_weyl_isometry(d), controlled_weyl_isometry(d)], [inp], eta)[0]
    assert np.allclose(partial_trace(out1, [0, 2]).matrix, eta.density().matrix)
    assert np.allclose(partial_trace(out1, [1]).matrix, np.diag([1, 0]))


def test_helper_output_accepts_mixed_states_and_matches_pure():
    d = 2
    eta = max_entangled(d)
    r = np.random.default_rng(4)
    v = random_pure_state((d * d, d * d), r)
    isos = [controlled_weyl_isometry(d), swap_isometry(d)]
    a = helper_output_states(isos, [v], eta)[0]
    b = helper_output_states(isos, [v.density()], eta.density())[0]
    assert np.allclose(a.matrix, b.matrix, atol=1e-10)
    with pytest.raises(ChannelError):
        helper_output_states(isos, [v], max_entangled(3))


def test_helper_apply_matches_per_block_outputs():
    d = 2
    eta = max_entangled(d).density()
    isos = [controlled_weyl_isometry(d), controlled_weyl_isometry(d)]
    probs = [0.25, 0.75]
    states = [
        PureState(np.kron(basis_vector(4, i), basis_vector(4, i)), (4, 4)).density() for i in (1, 2)
    ]
    x = np.zeros((2, 16, 2, 16), dtype=complex)
    for k in range(2):
        x[k, :, k, :] = probs[k] * states[k].matrix
    rho = DensityMatrix(x.reshape(32, 32), (2, 4, 4))
    out = helper_apply(isos, rho, eta)
    outs = helper_output_states(isos, states, eta)
    t = out.matrix.reshape(2, outs[0].side, 2, outs[0].side)
    for k in range(2):
        assert np.allclose(t[k, :, k, :], probs[k] * outs[k].matrix)
    assert np.allclose(np.sort(out.eigenvalues), np.linalg.eigvalsh(out.matrix), atol=1e-10)


def test_classical_blocks_rejects_coherent_register():
    plus = PureState(np.array([1, 1]) / np.sqrt(2), (2,)).density()
    rho = tensor_states(plus, maximally_mixed(2))
    with pytest.raises(ChannelError):
        classical_blocks(rho)
    probs, blocks = classical_blocks(tensor_states(maximally_mixed(2), maximally_mixed(2)))
    assert np.allclose(probs, [0.5, 0.5])


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_channels_preserve_trace_and_positivity(seed):
    r = np.random.default_rng(seed)
    din, dout, n = (int(x) for x in r.integers(1, 5, size=3))
    ch = random_channel(din, dout, max(n, -(-din // dout)), r)
    out = apply(ch, random_density((din,), r))
    assert np.trace(out.matrix).real == pytest.approx(1.0, abs=1e-9)
    assert np.min(out.eigenvalues) >= -1e-9
