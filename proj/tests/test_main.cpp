#include <gtest/gtest.h>

#include "enfnet/runtime.hpp"

int main(int argc, char** argv) {
  enfnet::tune_allocator();
  ::testing::InitGoogleTest(&argc, argv);
  return RUN_ALL_TESTS();
}
