import uuid

from django.db import models


class ExperimentRun(models.Model):
    STATUS_SUCCEEDED = "succeeded"
    STATUS_REJECTED = "rejected"
    STATUS_FAILED = "failed"

    id = models.UUIDField(primary_key=True, default=uuid.uuid4, editable=False)
    command = models.CharField(max_length=20)
    config_hash = models.CharField(max_length=64)
    config = models.JSONField(default=dict)
    status = models.CharField(
        max_length=20,
        choices=[
            (STATUS_SUCCEEDED, "Succeeded"),
            (STATUS_REJECTED, "Rejected"),
            (STATUS_FAILED, "Failed"),
        ],
        default=STATUS_SUCCEEDED,
    )
    exit_code = models.PositiveSmallIntegerField(default=0)
    output_path = models.TextField(blank=True)
    row_count = models.PositiveIntegerField(default=0)
    error = models.JSONField(null=True, blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ["-created_at"]
        indexes = [
            models.Index(fields=["config_hash"], name="run_config_hash_idx"),
            models.Index(fields=["command", "status"], name="run_command_status_idx"),
        ]

    def __str__(self):
        return f"{self.command} ({self.status}) at {self.created_at}"

    @classmethod
    def status_for(cls, exit_code):
        if exit_code == 0:
            return cls.STATUS_SUCCEEDED
        if exit_code == 2:
            return cls.STATUS_REJECTED
        return cls.STATUS_FAILED
