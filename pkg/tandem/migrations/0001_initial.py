import django.db.models.deletion
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='DatasetRecord',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('path', models.CharField(max_length=1024, unique=True)),
                ('n_samples', models.PositiveIntegerField()),
                ('grid_n', models.PositiveIntegerField()),
                ('field_length', models.PositiveIntegerField()),
                ('seed', models.BigIntegerField(default=0)),
                ('sha256', models.CharField(db_index=True, max_length=64)),
                ('manifest', models.JSONField(default=dict)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
            ],
        ),
        migrations.CreateModel(
            name='RunReport',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('command', models.CharField(max_length=32)),
                ('status', models.CharField(choices=[('ok', 'Succeeded'), ('failed', 'Failed'), ('dry_run', 'Dry run')], default='ok', max_length=16)),
                ('config', models.JSONField(default=dict)),
                ('metrics', models.JSONField(default=dict)),
                ('artifacts', models.JSONField(default=list)),
                ('timings', models.JSONField(default=dict)),
                ('error_class', models.CharField(blank=True, max_length=64)),
                ('error_message', models.TextField(blank=True)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='ModelCheckpoint',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('kind', models.CharField(choices=[('aae', 'Adversarial autoencoder'), ('fnn', 'Forward surrogate'), ('inn', 'Inverse network')], max_length=8)),
                ('path', models.CharField(max_length=1024)),
                ('sha256', models.CharField(db_index=True, max_length=64)),
                ('architecture', models.JSONField(default=dict)),
                ('metadata', models.JSONField(default=dict)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('dataset', models.ForeignKey(blank=True, null=True, on_delete=django.db.models.deletion.SET_NULL, related_name='checkpoints', to='tandem.datasetrecord')),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
    ]
