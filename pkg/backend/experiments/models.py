import uuid

from django.db import models
from django.utils import timezone


class ExperimentRun(models.Model):
    """
    Registry row for one finished experiment. The traces themselves stay in
    the run directory; this row holds the summary figures.
    """

    KIND_CHOICES = [
        ('control', 'Learning Control'),
        ('identification', 'Model Identification'),
    ]

    METHOD_CHOICES = [
        ('KRILC', 'Kernel-Regularized ILC'),
        ('KRILC-LS', 'KRILC with LS Controller'),
        ('ADAPTIVE', 'Adaptive ILC'),
        ('INVERSION', 'Inversion-Based ILC'),
    ]

    STATUS_CHOICES = [
        ('completed', 'Completed'),
        ('failed', 'Failed'),
    ]

    run_uuid = models.UUIDField(
        default=uuid.uuid4,
        editable=False,
        unique=True,
        help_text="Unique identifier for the run"
    )

    kind = models.CharField(max_length=20, choices=KIND_CHOICES, default='control')
    method = models.CharField(max_length=20, choices=METHOD_CHOICES, db_index=True)
    preset = models.CharField(max_length=100, blank=True, default='', db_index=True)
    seed = models.PositiveIntegerField(default=0)
    config_hash = models.CharField(max_length=32, blank=True, default='')
    status = models.CharField(max_length=20, choices=STATUS_CHOICES, default='completed', db_index=True)
    error_message = models.TextField(blank=True, default='')

    final_tracking_fit = models.FloatField(null=True, blank=True)
    average_model_fit = models.FloatField(
        null=True,
        blank=True,
        help_text="Average RLS model fit at the last evaluated iteration"
    )
    average_model_fit_ls = models.FloatField(null=True, blank=True)
    max_abs_input = models.FloatField(null=True, blank=True)
    max_theta_norm = models.FloatField(null=True, blank=True)
    fallback_count = models.PositiveIntegerField(default=0)

    condition_lhs = models.FloatField(null=True, blank=True)
    ultimate_bound = models.FloatField(null=True, blank=True)
    tail_error_max = models.FloatField(null=True, blank=True)

    wall_time_s = models.FloatField(default=0.0)
    output_dir = models.CharField(max_length=500, blank=True, default='')
    config = models.JSONField(default=dict, blank=True)

    created_at = models.DateTimeField(default=timezone.now, db_index=True)

    class Meta:
        ordering = ['-created_at']
        verbose_name = 'Experiment Run'
        verbose_name_plural = 'Experiment Runs'
        indexes = [
            models.Index(fields=['method', 'preset'], name='experiments_method_preset_idx'),
        ]

    def __str__(self):
        label = self.preset or self.kind
        return f"{self.method} {label} seed={self.seed} ({self.status})"
