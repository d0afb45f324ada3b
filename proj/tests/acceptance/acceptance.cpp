// Placeholder; the full acceptance suite lands once the library builds.
int main() { return 0; }
