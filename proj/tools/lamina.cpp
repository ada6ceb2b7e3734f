#include <cstdio>

int main() {
  std::fprintf(stderr, "lamina: no subcommand\n");
  return 2;
}
