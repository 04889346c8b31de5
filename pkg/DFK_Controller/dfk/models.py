from django.db import models
import uuid


class PipelineRun(models.Model):
    """Model for tracking pipeline command invocations"""
    COMMANDS = [
        ('acquire', 'Data Acquisition'),
        ('design', 'Controller Design'),
        ('simulate', 'Closed-Loop Simulation'),
        ('montecarlo', 'Monte Carlo Study'),
    ]

    STATUS_CHOICES = [
        ('pending', 'Pending'),
        ('completed', 'Completed'),
        ('failed', 'Failed'),
    ]

    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    command = models.CharField(max_length=20, choices=COMMANDS)
    config_path = models.CharField(max_length=500, blank=True)
    config_snapshot = models.JSONField(default=dict, blank=True)
    output_path = models.CharField(max_length=500, blank=True)
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='pending')
    metrics = models.JSONField(default=dict, blank=True)
    error_message = models.TextField(blank=True)
    started_at = models.DateTimeField(auto_now_add=True)
    finished_at = models.DateTimeField(null=True, blank=True)

    class Meta:
        ordering = ['-started_at']

    def __str__(self):
        return f"{self.command} - {self.status} ({self.output_path or 'no output'})"

    @property
    def duration(self):
        if self.finished_at is None:
            return None
        return (self.finished_at - self.started_at).total_seconds()
