# Generated by Django 5.2.6

import django.utils.timezone
import uuid
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = [
    ]

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('run_uuid', models.UUIDField(default=uuid.uuid4, editable=False, help_text='Unique identifier for the run', unique=True)),
                ('kind', models.CharField(choices=[('control', 'Learning Control'), ('identification', 'Model Identification')], default='control', max_length=20)),
                ('method', models.CharField(choices=[('KRILC', 'Kernel-Regularized ILC'), ('KRILC-LS', 'KRILC with LS Controller'), ('ADAPTIVE', 'Adaptive ILC'), ('INVERSION', 'Inversion-Based ILC')], db_index=True, max_length=20)),
                ('preset', models.CharField(blank=True, db_index=True, default='', max_length=100)),
                ('seed', models.PositiveIntegerField(default=0)),
                ('config_hash', models.CharField(blank=True, default='', max_length=32)),
                ('status', models.CharField(choices=[('completed', 'Completed'), ('failed', 'Failed')], db_index=True, default='completed', max_length=20)),
                ('error_message', models.TextField(blank=True, default='')),
                ('final_tracking_fit', models.FloatField(blank=True, null=True)),
                ('average_model_fit', models.FloatField(blank=True, help_text='Average RLS model fit at the last evaluated iteration', null=True)),
                ('average_model_fit_ls', models.FloatField(blank=True, null=True)),
                ('max_abs_input', models.FloatField(blank=True, null=True)),
                ('max_theta_norm', models.FloatField(blank=True, null=True)),
                ('fallback_count', models.PositiveIntegerField(default=0)),
                ('condition_lhs', models.FloatField(blank=True, null=True)),
                ('ultimate_bound', models.FloatField(blank=True, null=True)),
                ('tail_error_max', models.FloatField(blank=True, null=True)),
                ('wall_time_s', models.FloatField(default=0.0)),
                ('output_dir', models.CharField(blank=True, default='', max_length=500)),
                ('config', models.JSONField(blank=True, default=dict)),
                ('created_at', models.DateTimeField(db_index=True, default=django.utils.timezone.now)),
            ],
            options={
                'verbose_name': 'Experiment Run',
                'verbose_name_plural': 'Experiment Runs',
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['method', 'preset'], name='experiments_method_preset_idx')],
            },
        ),
    ]
