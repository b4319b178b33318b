"""
Tests d'intégration pour Epic Events CRM
Tests des interactions entre composants avec base de données réelle
"""
