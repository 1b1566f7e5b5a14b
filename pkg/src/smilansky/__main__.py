# coding: utf-8

"""This module defines the behavior of python -m."""

from __future__ import absolute_import

import sys

import smilansky.cli

sys.exit(smilansky.cli.main())
