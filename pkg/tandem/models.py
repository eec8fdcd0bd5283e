from django.db import models


class DatasetRecord(models.Model):
    path = models.CharField(max_length=1024, unique=True)
    n_samples = models.PositiveIntegerField()
    grid_n = models.PositiveIntegerField()
    field_length = models.PositiveIntegerField()
    seed = models.BigIntegerField(default=0)
    sha256 = models.CharField(max_length=64, db_index=True)
    manifest = models.JSONField(default=dict)
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    def __str__(self):
        return f"{self.path} ({self.n_samples} samples)"


class ModelCheckpoint(models.Model):
    KIND_CHOICES = [
        ('aae', 'Adversarial autoencoder'),
        ('fnn', 'Forward surrogate'),
        ('inn', 'Inverse network'),
    ]

    kind = models.CharField(max_length=8, choices=KIND_CHOICES)
    path = models.CharField(max_length=1024)
    sha256 = models.CharField(max_length=64, db_index=True)
    architecture = models.JSONField(default=dict)
    metadata = models.JSONField(default=dict)
    dataset = models.ForeignKey(DatasetRecord, null=True, blank=True, on_delete=models.SET_NULL,
                                related_name='checkpoints')
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.kind}: {self.path}"


class RunReport(models.Model):
    STATUS_CHOICES = [
        ('ok', 'Succeeded'),
        ('failed', 'Failed'),
        ('dry_run', 'Dry run'),
    ]

    command = models.CharField(max_length=32)
    status = models.CharField(max_length=16, choices=STATUS_CHOICES, default='ok')
    config = models.JSONField(default=dict)
    metrics = models.JSONField(default=dict)
    artifacts = models.JSONField(default=list)
    timings = models.JSONField(default=dict)
    error_class = models.CharField(max_length=64, blank=True)
    error_message = models.TextField(blank=True)
    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        ordering = ['-created_at']

    def __str__(self):
        return f"{self.command} [{self.status}] {self.created_at:%Y-%m-%d %H:%M}"
