"""Graph-native query optimization toolkit."""
