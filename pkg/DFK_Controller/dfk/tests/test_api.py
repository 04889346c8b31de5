from datetime import timedelta

from django.urls import reverse
from django.utils import timezone
from rest_framework import status
from rest_framework.test import APITestCase

from dfk.models import PipelineRun


class PipelineRunApiTests(APITestCase):
    """Read-only listing of recorded pipeline runs"""

    def setUp(self):
        """Set up test data"""
        self.acquire = PipelineRun.objects.create(
            command='acquire',
            config_path='duffing_k1.json',
            output_path='duffing.csv',
            status='completed',
            metrics={'L': 2000, 'seed': 0},
            finished_at=timezone.now(),
        )
        self.design = PipelineRun.objects.create(
            command='design',
            config_path='duffing_k1.json',
            output_path='k1.ctrl',
            status='failed',
            error_message='Design program infeasible',
        )
        PipelineRun.objects.filter(pk=self.acquire.pk).update(started_at=timezone.now() - timedelta(minutes=5))
        self.acquire.refresh_from_db()

    def test_list_runs(self):
        """All runs are listed, newest first"""
        response = self.client.get(reverse('dfk:pipelinerun-list'))

        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data['count'], 2)
        self.assertEqual(response.data['results'][0]['id'], str(self.design.id))

    def test_filter_by_command_and_status(self):
        """Query parameters narrow the listing"""
        url = reverse('dfk:pipelinerun-list')

        response = self.client.get(url, {'command': 'acquire'})
        self.assertEqual([run['command'] for run in response.data['results']], ['acquire'])

        response = self.client.get(url, {'status': 'failed'})
        self.assertEqual(response.data['count'], 1)
        self.assertEqual(response.data['results'][0]['error_message'], 'Design program infeasible')

    def test_retrieve_run(self):
        """A single run carries its metrics and duration"""
        response = self.client.get(reverse('dfk:pipelinerun-detail', args=[self.acquire.id]))

        self.assertEqual(response.status_code, status.HTTP_200_OK)
        self.assertEqual(response.data['metrics'], {'L': 2000, 'seed': 0})
        self.assertEqual(response.data['command_display'], 'Data Acquisition')
        self.assertIsNotNone(response.data['duration'])

    def test_unfinished_run_has_no_duration(self):
        response = self.client.get(reverse('dfk:pipelinerun-detail', args=[self.design.id]))
        self.assertIsNone(response.data['duration'])

    def test_runs_are_read_only(self):
        """Nothing can be created or deleted through the API"""
        response = self.client.post(reverse('dfk:pipelinerun-list'), {'command': 'acquire'}, format='json')
        self.assertEqual(response.status_code, status.HTTP_405_METHOD_NOT_ALLOWED)

        response = self.client.delete(reverse('dfk:pipelinerun-detail', args=[self.acquire.id]))
        self.assertEqual(response.status_code, status.HTTP_405_METHOD_NOT_ALLOWED)
        self.assertTrue(PipelineRun.objects.filter(pk=self.acquire.id).exists())
