#include "dvta/cli/dispatch.hpp"

int main(int argc, char** argv) {
  dvta::tune_allocator();
  return dvta::dispatch(argc, argv);
}
