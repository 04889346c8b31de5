import math

import numpy as np
from django.test import SimpleTestCase

from dfk.exceptions import DivergenceError
from dfk.plant_services import (
    KnownLpvSystem, LpvDataset, ManipulatorExcitation, NoiseSpec, SchedulingMap, SinusoidExcitation,
    UniformExcitation, acquire_dataset, acquire_lpv_dataset, draw_noise, duffing_dynamics, duffing_plant,
    gravity_compensation, integrate_rk4, linear_plant, two_link_dynamics, two_link_energy, two_link_plant,
)

DUFFING = {'alpha1': -1.0, 'alpha2': 1.0, 'beta': 0.2}
ARM = {'l1': 0.8, 'l2': 0.7, 'M1': 2.5, 'M2': 2.0, 'g': 9.81}


def oscillator():
    return linear_plant([[0.0, 1.0], [-1.0, 0.0]], [[0.0], [1.0]])


class DynamicsTests(SimpleTestCase):
    """Right-hand sides of the two plants"""

    def test_duffing_origin_is_equilibrium(self):
        np.testing.assert_array_equal(duffing_dynamics([0.0, 0.0], 0.0, DUFFING), [0.0, 0.0])

    def test_duffing_substitution(self):
        np.testing.assert_allclose(duffing_dynamics([1.0, 0.0], 0.0, DUFFING), [0.0, 0.0])
        np.testing.assert_allclose(duffing_dynamics([1.0, 1.0], 0.0, DUFFING), [1.0, -0.2])

    def test_two_link_gravity_compensation_holds_arm(self):
        z = np.array([0.4, -0.7, 0.0, 0.0])
        derivative = two_link_dynamics(z, gravity_compensation(z, ARM), ARM)
        np.testing.assert_allclose(derivative, np.zeros(4), atol=1e-12)

    def test_two_link_without_gravity_stays_at_rest(self):
        params = {**ARM, 'g': 0.0}
        derivative = two_link_dynamics(np.array([1.2, 0.3, 0.0, 0.0]), np.zeros(2), params)
        np.testing.assert_allclose(derivative, np.zeros(4), atol=1e-12)

    def test_two_link_hanging_down_is_equilibrium(self):
        derivative = two_link_dynamics(np.zeros(4), np.zeros(2), ARM)
        np.testing.assert_allclose(derivative, np.zeros(4), atol=1e-12)

    def test_plant_rejects_wrong_derivative_shape(self):
        plant = duffing_plant()
        plant.dynamics = lambda x, u, t, prm: np.zeros(3)
        with self.assertRaises(ValueError):
            plant.derivative(np.zeros(2), 0.0)


class IntegrationTests(SimpleTestCase):
    """Fixed-step RK4 with held inputs"""

    def test_oscillator_returns_to_start_after_one_period(self):
        _, states = integrate_rk4(oscillator(), [1.0, 0.0], lambda t, x: [0.0], 2 * math.pi, 1e-3)
        np.testing.assert_allclose(states[-1], [1.0, 0.0], atol=1e-6)

    def test_fourth_order_convergence(self):
        errors = []
        for dt in (0.2, 0.1):
            times, states = integrate_rk4(oscillator(), [1.0, 0.0], lambda t, x: [0.0], 2 * math.pi, dt)
            exact = np.array([math.cos(times[-1]), -math.sin(times[-1])])
            errors.append(np.max(np.abs(states[-1] - exact)))
        ratio = errors[0] / errors[1]
        self.assertGreaterEqual(ratio, 12.0)
        self.assertLessEqual(ratio, 20.0)

    def test_final_time_is_hit_exactly(self):
        times, states = integrate_rk4(oscillator(), [1.0, 0.0], lambda t, x: [0.0], 1.05, 0.1)
        self.assertAlmostEqual(times[-1], 1.05, places=12)
        self.assertEqual(states.shape, (times.size, 2))

    def test_equilibrium_trajectory_is_constant(self):
        _, states = integrate_rk4(duffing_plant(), [0.0, 0.0], lambda t, x: [0.0], 5.0, 0.01)
        np.testing.assert_array_equal(states, np.zeros_like(states))

    def test_held_samples_match_callable_input(self):
        samples = np.array([[0.3], [-0.2], [0.5], [0.1]])
        period = 0.5

        def held(t, x):
            return samples[min(int(round(t / period)), len(samples) - 1)]

        _, from_callable = integrate_rk4(duffing_plant(), [0.1, 0.0], held, 2.0, 0.05, input_period=period)
        _, from_samples = integrate_rk4(duffing_plant(), [0.1, 0.0], samples, 2.0, 0.05, input_period=period)
        np.testing.assert_array_equal(from_callable, from_samples)

    def test_duffing_design_run_stays_bounded(self):
        excitation = SinusoidExcitation([0.4], [1.0])
        _, states = integrate_rk4(duffing_plant(), [0.0, 0.0], excitation, 200.0, 0.01, input_period=0.1)
        self.assertTrue(np.all(np.isfinite(states)))
        self.assertLess(np.max(np.abs(states)), 10.0)

    def test_default_duffing_is_double_well(self):
        params = duffing_plant().parameters
        self.assertEqual((params['alpha1'], params['alpha2']), (-1.0, 1.0))
        for well in (-1.0, 1.0):
            np.testing.assert_allclose(duffing_dynamics([well, 0.0], 0.0, params), [0.0, 0.0], atol=1e-12)
        # released far out, the hardening spring pulls the state back
        _, states = integrate_rk4(duffing_plant(), [3.0, 0.0], lambda t, x: [0.0], 100.0, 0.01)
        self.assertLess(np.max(np.abs(states[-1000:, 0])), 2.0)
        self.assertTrue(np.all(np.abs(states[:, 0]) <= 3.0 + 1e-9))

    def test_two_link_energy_is_conserved(self):
        plant = two_link_plant()
        z0 = np.array([0.5, -0.3, 0.0, 0.0])
        _, states = integrate_rk4(plant, z0, lambda t, x: np.zeros(2), 1.0, 1e-3)
        energies = np.array([two_link_energy(z, ARM) for z in states[::50]])
        drift = np.max(np.abs(energies - energies[0])) / abs(energies[0])
        self.assertLess(drift, 1e-4)

    def test_divergence_names_the_step(self):
        unstable = linear_plant([[50.0]], [[0.0]])
        with self.assertRaises(DivergenceError) as ctx:
            integrate_rk4(unstable, [1.0], lambda t, x: [0.0], 100.0, 1.0)
        self.assertGreater(ctx.exception.step, 0)

    def test_invalid_arguments(self):
        with self.assertRaises(ValueError):
            integrate_rk4(oscillator(), [1.0, 0.0], lambda t, x: [0.0], 1.0, 0.0)
        with self.assertRaises(ValueError):
            integrate_rk4(oscillator(), [1.0, 0.0], lambda t, x: [0.0], 0.01, 0.1)
        with self.assertRaises(ValueError):
            integrate_rk4(oscillator(), [np.nan, 0.0], lambda t, x: [0.0], 1.0, 0.1)


class ExcitationTests(SimpleTestCase):

    def test_manipulator_saturation_feedback(self):
        u = ManipulatorExcitation()(0.0, [2.0, 0.0, 0.0, 0.0])
        self.assertAlmostEqual(u[0], -40.0)

    def test_manipulator_quiet_window(self):
        spec = ManipulatorExcitation()
        u = spec(600 * spec.Ts, [0.5, -0.5, 0.0, 0.0])
        np.testing.assert_array_equal(u, [0.0, 0.0])

    def test_manipulator_sinusoids_vanish_at_origin(self):
        np.testing.assert_allclose(ManipulatorExcitation()(0.0, np.zeros(4)), [0.0, 0.0])

    def test_manipulator_two_tone_outside_windows(self):
        spec = ManipulatorExcitation()
        tau = 100 * spec.Ts
        expected = 100.0 * math.sin(0.07 * tau) + 100.0 * math.sin(0.8 * tau)
        self.assertAlmostEqual(spec(tau, np.zeros(4))[0], expected)

    def test_uniform_excitation_is_seeded(self):
        first = UniformExcitation(2.0, Ts=0.1, horizon=10, seed=3)
        second = UniformExcitation(2.0, Ts=0.1, horizon=10, seed=3)
        values = [first(0.1 * k)[0] for k in range(10)]
        self.assertEqual(values, [second(0.1 * k)[0] for k in range(10)])
        self.assertLessEqual(max(abs(v) for v in values), 2.0)


class NoiseTests(SimpleTestCase):

    def test_unknown_kind_rejected(self):
        with self.assertRaises(ValueError):
            NoiseSpec(kind='pink', level=0.1)
        with self.assertRaises(ValueError):
            NoiseSpec(kind='uniform-amplitude', level=-1.0)

    def test_uniform_noise_is_bounded(self):
        noise = draw_noise(NoiseSpec('uniform-amplitude', 0.01, seed=1), (1000, 4))
        self.assertLessEqual(np.max(np.abs(noise)), 0.01)

    def test_same_seed_same_noise(self):
        spec = NoiseSpec('gaussian-ratio', 0.05, seed=9)
        np.testing.assert_array_equal(draw_noise(spec, (50, 2), scale=[1.0, 2.0]),
                                      draw_noise(spec, (50, 2), scale=[1.0, 2.0]))

    def test_no_noise_is_zero(self):
        np.testing.assert_array_equal(draw_noise(NoiseSpec(), (3, 2)), np.zeros((3, 2)))


class SchedulingMapTests(SimpleTestCase):

    def test_x1_squared(self):
        states = np.array([[2.0, 5.0], [-3.0, 1.0]])
        np.testing.assert_array_equal(SchedulingMap('x1_squared').features(states), [[4.0], [9.0]])
        np.testing.assert_array_equal(SchedulingMap('x1_squared').regressor(states), states)

    def test_delayed_output_repeats_first_sample(self):
        states = np.array([[1.0, 9.0], [2.0, 9.0], [3.0, 9.0]])
        expected = [[1.0, 1.0], [2.0, 1.0], [3.0, 2.0]]
        np.testing.assert_array_equal(SchedulingMap('delayed_output').regressor(states), expected)
        np.testing.assert_array_equal(SchedulingMap('delayed_output').features(states), expected)

    def test_positions(self):
        states = np.array([[0.1, 0.2, 3.0, 4.0]])
        np.testing.assert_array_equal(SchedulingMap('positions').features(states), [[0.1, 0.2]])
        self.assertEqual(SchedulingMap('positions').feature_dim(4), 2)

    def test_unknown_map(self):
        with self.assertRaises(ValueError):
            SchedulingMap('x2_cubed')


class AcquisitionTests(SimpleTestCase):
    """Sampled, noise-corrupted datasets"""

    def acquire(self, state_noise=NoiseSpec(), L=50):
        excitation = SinusoidExcitation([0.4], [1.0])
        return acquire_dataset(duffing_plant(), excitation, 0.1, L, state_noise=state_noise)

    def test_shapes_carry_extra_state_sample(self):
        dataset = self.acquire(L=2)
        self.assertEqual(dataset.L, 2)
        self.assertEqual(dataset.x.shape, (3, 2))
        self.assertEqual(dataset.p.shape, (2, 2))
        self.assertEqual(dataset.u.shape, (2, 1))

    def test_noiseless_linear_plant_matches_integrator(self):
        plant = oscillator()
        excitation = SinusoidExcitation([0.5], [0.7])
        dataset = acquire_dataset(plant, excitation, 0.1, 20, substeps=10)
        samples = np.array([excitation(0.1 * k)[0] for k in range(20)])
        _, states = integrate_rk4(plant, [0.0, 0.0], samples, 2.0, 0.01, input_period=0.1)
        np.testing.assert_allclose(dataset.x, states[::10], rtol=0, atol=1e-12)

    def test_determinism(self):
        spec = NoiseSpec('gaussian-ratio', 0.05, seed=4)
        first, second = self.acquire(spec), self.acquire(spec)
        np.testing.assert_array_equal(first.x, second.x)
        np.testing.assert_array_equal(first.u, second.u)

    def test_measurement_noise_is_the_drawn_sequence(self):
        spec = NoiseSpec('gaussian-ratio', 0.05, seed=4)
        clean, noisy = self.acquire(), self.acquire(spec)
        expected = draw_noise(spec, clean.x.shape, scale=np.std(clean.x, axis=0))
        np.testing.assert_allclose(noisy.x - clean.x, expected, atol=1e-12)

    def test_noise_to_signal_ratio(self):
        spec = NoiseSpec('gaussian-ratio', 0.05, seed=11)
        clean, noisy = self.acquire(L=2000), self.acquire(spec, L=2000)
        ratio = np.std(noisy.x - clean.x, axis=0) / np.std(clean.x, axis=0)
        self.assertTrue(np.all((ratio >= 0.04) & (ratio <= 0.06)), ratio)

    def test_identity_scheduling(self):
        dataset = self.acquire()
        np.testing.assert_array_equal(dataset.p, dataset.x[:-1])

    def test_dataset_rejects_inconsistent_rows(self):
        with self.assertRaises(ValueError):
            LpvDataset(p=np.zeros((3, 1)), x=np.zeros((3, 1)), u=np.zeros(3), Ts=0.1)
        with self.assertRaises(ValueError):
            LpvDataset(p=np.zeros((1, 1)), x=np.zeros((2, 1)), u=np.zeros(1), Ts=0.1)

    def test_lpv_fixture_recursion(self):
        system = KnownLpvSystem(A_terms=[[[0.5]]], B_terms=[[[2.0]]], H_terms=[[[1.0]]],
                                p_box=[(-5, 5)], x_box=[(-5, 5)], e_box=[(0, 0)])
        dataset = acquire_lpv_dataset(system, UniformExcitation(1.0, Ts=1.0, horizon=30, seed=2), 30)
        np.testing.assert_allclose(dataset.x_next[:, 0], 0.5 * dataset.x_now[:, 0] + 2.0 * dataset.u[:, 0],
                                   atol=1e-14)
        np.testing.assert_array_equal(dataset.p, dataset.x_now)
