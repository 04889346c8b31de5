import math
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from dfk.artifact_services import (
    dump_controller, parse_controller, parse_key_values, read_controller, read_dataset, read_key_values,
    sidecar_path, write_controller, write_dataset, write_design_report, write_key_values, write_run,
)
from dfk.basis_services import gaussian_basis, polynomial_basis
from dfk.closed_loop_services import ClosedLoopRun
from dfk.design_services import Controller, ControllerBank, DesignReport
from dfk.exceptions import DatasetFormatError
from dfk.plant_services import LpvDataset


def random_dataset(L=25, n_p=1, n_x=2, n_u=1, seed=0):
    rng = np.random.default_rng(seed)
    return LpvDataset(p=rng.normal(size=(L, n_p)), x=rng.normal(size=(L + 1, n_x)), u=rng.normal(size=(L, n_u)),
                      Ts=0.1, scheduling='x1_squared', metadata={'plant': 'duffing', 'seed': 7})


class ArtifactTestCase(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()


class KeyValueTests(ArtifactTestCase):

    def test_values_survive(self):
        values = {'rms': [0.1, 0.2], 'status': 'optimal', 'n': np.int64(3), 'x': np.float64(1.5),
                  'nested': {'b': 1, 'a': None}}
        path = write_key_values(self.dir / 'summary.txt', values)
        restored = read_key_values(path)
        self.assertEqual(restored['n'], 3)
        self.assertEqual(restored['x'], 1.5)
        self.assertEqual(restored['nested'], {'a': None, 'b': 1})
        self.assertEqual(list(restored), list(values))

    def test_comments_and_blank_lines(self):
        self.assertEqual(parse_key_values("# note\n\na = 1\n"), {'a': 1})

    def test_malformed_lines(self):
        with self.assertRaises(DatasetFormatError):
            parse_key_values("no separator here\n")
        with self.assertRaises(DatasetFormatError):
            parse_key_values("a = {not json\n")


class DatasetFileTests(ArtifactTestCase):
    """CSV datasets with their metadata sidecar"""

    def test_exact_round_trip(self):
        dataset = random_dataset()
        path = write_dataset(dataset, self.dir / 'data.csv')
        self.assertTrue(sidecar_path(path).exists())
        restored = read_dataset(path)
        np.testing.assert_array_equal(restored.p, dataset.p)
        np.testing.assert_array_equal(restored.x, dataset.x)
        np.testing.assert_array_equal(restored.u, dataset.u)
        self.assertEqual(restored.Ts, 0.1)
        self.assertEqual(restored.scheduling, 'x1_squared')
        self.assertEqual(restored.metadata['plant'], 'duffing')

    def test_header_layout(self):
        path = write_dataset(random_dataset(L=3, n_p=2, n_x=2, n_u=2), self.dir / 'data.csv')
        lines = path.read_text().splitlines()
        self.assertEqual(lines[0], 'k,p_1,p_2,x_1,x_2,u_1,u_2')
        self.assertEqual(len(lines), 1 + 3 + 1)
        self.assertTrue(lines[-1].startswith('3,,,'))
        self.assertTrue(lines[-1].endswith(',,'))

    def test_writing_twice_is_byte_identical(self):
        dataset = random_dataset()
        first = write_dataset(dataset, self.dir / 'a.csv').read_bytes()
        second = write_dataset(dataset, self.dir / 'b.csv').read_bytes()
        self.assertEqual(first, second)

    def test_missing_sidecar(self):
        path = write_dataset(random_dataset(), self.dir / 'data.csv')
        sidecar_path(path).unlink()
        with self.assertRaises(DatasetFormatError):
            read_dataset(path)

    def test_bad_number(self):
        path = write_dataset(random_dataset(L=4), self.dir / 'data.csv')
        lines = path.read_text().splitlines()
        lines[2] = lines[2].replace(lines[2].split(',')[1], 'abc', 1)
        path.write_text('\n'.join(lines) + '\n')
        with self.assertRaises(DatasetFormatError):
            read_dataset(path)

    def test_bad_header(self):
        path = write_dataset(random_dataset(L=4), self.dir / 'data.csv')
        text = path.read_text().replace('k,p_1', 'k,q_1', 1)
        path.write_text(text)
        with self.assertRaises(DatasetFormatError):
            read_dataset(path)

    def test_too_few_rows(self):
        path = write_dataset(random_dataset(L=4), self.dir / 'data.csv')
        lines = path.read_text().splitlines()
        path.write_text('\n'.join(lines[:2]) + '\n')
        with self.assertRaises(DatasetFormatError):
            read_dataset(path)


class ControllerFileTests(ArtifactTestCase):

    def test_polynomial_bank_round_trip(self):
        basis = polynomial_basis(2, 3)
        rng = np.random.default_rng(2)
        channels = []
        for _ in range(2):
            coefficients = rng.normal(size=(2, 2, basis.m))
            coefficients[np.abs(coefficients) < 0.5] = 0.0
            channels.append(Controller(basis=basis, n_x=2, coefficients=coefficients))
        path = write_controller(ControllerBank(channels), self.dir / 'k.txt')
        restored = read_controller(path)
        self.assertEqual(restored.n_u, 2)
        for original, copy in zip(channels, restored.channels):
            np.testing.assert_array_equal(copy.coefficients, original.coefficients)
            self.assertEqual(copy.basis, original.basis)

    def test_gaussian_basis_round_trip(self):
        basis = gaussian_basis([[0.1], [0.9]], [0.3, 0.4])
        controller = Controller(basis=basis, n_x=1, coefficients=[[[1.0, 0.0]], [[0.0, -2.0]]])
        restored = parse_controller(dump_controller(controller))
        np.testing.assert_array_equal(restored.channels[0].gains([0.5])[1], controller.gains([0.5])[1])

    def test_only_nonzero_terms_are_written(self):
        controller = Controller.zero(polynomial_basis(1, 2), 1)
        controller.coefficients[1, 0, 2] = 0.125
        text = dump_controller(controller)
        self.assertIn('a 2 1 3 = 0.125', text)
        self.assertEqual(text.count('\na '), 1)

    def test_channel_count_mismatch(self):
        text = dump_controller(Controller.zero(polynomial_basis(1, 1), 1)).replace('channels = 1', 'channels = 2')
        with self.assertRaises(DatasetFormatError):
            parse_controller(text)

    def test_entries_outside_a_channel(self):
        with self.assertRaises(DatasetFormatError):
            parse_controller('n_x = 1\n')
        with self.assertRaises(DatasetFormatError):
            parse_controller('# empty\n')

    def test_coefficient_outside_the_basis(self):
        text = dump_controller(Controller.zero(polynomial_basis(1, 1), 1))
        for entry in ('a 1 1 3 = 0.5', 'a 3 1 1 = 0.5', 'a 1 2 1 = 0.5', 'a 0 1 1 = 0.5'):
            with self.subTest(entry=entry), self.assertRaises(DatasetFormatError):
                parse_controller(text + entry + '\n')

    def test_malformed_coefficient_entry(self):
        text = dump_controller(Controller.zero(polynomial_basis(1, 1), 1))
        with self.assertRaises(DatasetFormatError):
            parse_controller(text + 'a 1 x 1 = 0.5\n')
        with self.assertRaises(DatasetFormatError):
            parse_controller(text + 'a 1 1 1 = big\n')

    def test_missing_file(self):
        with self.assertRaises(DatasetFormatError):
            read_controller(self.dir / 'missing.txt')


class ReportFileTests(ArtifactTestCase):

    def test_design_report_keys(self):
        report = DesignReport(
            channel=0, L=10, N=4, m=2, zeta=0.5, n_pairs=3, n_constraints=34, objective=1.25,
            status='optimal', n_selected=2, delta=0.1, lambda2_s=0.8, lambda_S=1.0, lambda_B=2.0,
            stability_product=0.8, stable=True, max_violation=0.0, solve_seconds=0.01,
            provenance={'overrides': []},
        )
        path = write_design_report([report], self.dir / 'k.txt.report', extra={'seed': 3})
        values = read_key_values(path)
        self.assertEqual(values['seed'], 3)
        self.assertEqual(values['channel1.n_selected'], 2)
        self.assertEqual(values['channel1.provenance'], {'overrides': []})
        self.assertTrue(math.isnan(values['channel1.fit_rms']))
        self.assertIs(values['channel1.lambda_B_available'], True)

    def test_run_csv(self):
        T = 4
        run = ClosedLoopRun(t=0.1 * np.arange(T), r=np.ones((T, 2)), x=np.zeros((T, 2)), x_measured=np.zeros((T, 2)),
                            p=np.zeros((T, 2)), u=np.zeros((T, 1)), e=np.zeros((T, 2)), te=np.ones(T))
        lines = write_run(run, self.dir / 'run.csv').read_text().splitlines()
        self.assertEqual(lines[0], 't,r_1,r_2,x_1,x_2,u,TE')
        self.assertEqual(len(lines), T + 1)
        self.assertEqual(lines[1], '0.0,1.0,1.0,0.0,0.0,0.0,1.0')
