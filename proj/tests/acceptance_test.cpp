// placeholder main
int main() { return 1; }
