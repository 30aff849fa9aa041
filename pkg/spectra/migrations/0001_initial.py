import uuid

from django.db import migrations, models


class Migration(migrations.Migration):
    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name="ExperimentRun",
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
                ("command", models.CharField(max_length=20)),
                ("config_hash", models.CharField(max_length=64)),
                ("config", models.JSONField(default=dict)),
                (
                    "status",
                    models.CharField(
                        choices=[
                            ("succeeded", "Succeeded"),
                            ("rejected", "Rejected"),
                            ("failed", "Failed"),
                        ],
                        default="succeeded",
                        max_length=20,
                    ),
                ),
                ("exit_code", models.PositiveSmallIntegerField(default=0)),
                ("output_path", models.TextField(blank=True)),
                ("row_count", models.PositiveIntegerField(default=0)),
                ("error", models.JSONField(blank=True, null=True)),
                ("created_at", models.DateTimeField(auto_now_add=True)),
            ],
            options={
                "ordering": ["-created_at"],
                "indexes": [
                    models.Index(fields=["config_hash"], name="run_config_hash_idx"),
                    models.Index(
                        fields=["command", "status"], name="run_command_status_idx"
                    ),
                ],
            },
        ),
    ]
