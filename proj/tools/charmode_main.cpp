#include <cstdio>
int main() { std::puts("charmode"); return 0; }
