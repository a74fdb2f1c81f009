"""Age-of-View simulator and MDR-GBA scheduling for vehicular sensing and uploading."""

__version__ = "0.1.0"
