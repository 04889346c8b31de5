# Generated by Django 5.2.5 on 2026-10-18 10:12

from django.db import migrations, models
import uuid


class Migration(migrations.Migration):
    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="PipelineRun",
            fields=[
                (
                    "id",
                    models.UUIDField(
                        default=uuid.uuid4,
                        editable=False,
                        primary_key=True,
                        serialize=False,
                    ),
                ),
                (
                    "command",
                    models.CharField(
                        choices=[
                            ("acquire", "Data Acquisition"),
                            ("design", "Controller Design"),
                            ("simulate", "Closed-Loop Simulation"),
                            ("montecarlo", "Monte Carlo Study"),
                        ],
                        max_length=20,
                    ),
                ),
                ("config_path", models.CharField(blank=True, max_length=500)),
                ("config_snapshot", models.JSONField(blank=True, default=dict)),
                ("output_path", models.CharField(blank=True, max_length=500)),
                (
                    "status",
                    models.CharField(
                        choices=[
                            ("pending", "Pending"),
                            ("completed", "Completed"),
                            ("failed", "Failed"),
                        ],
                        default="pending",
                        max_length=20,
                    ),
                ),
                ("metrics", models.JSONField(blank=True, default=dict)),
                ("error_message", models.TextField(blank=True)),
                ("started_at", models.DateTimeField(auto_now_add=True)),
                ("finished_at", models.DateTimeField(blank=True, null=True)),
            ],
            options={
                "ordering": ["-started_at"],
            },
        ),
    ]
