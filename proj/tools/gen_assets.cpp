// Writes the built-in skeleton table and shape basis into a data directory.
#include "worldpose/body.hpp"

#include <filesystem>
#include <iostream>

int main(int argc, char** argv) {
  const std::filesystem::path dir = argc > 1 ? argv[1] : "data";
  std::filesystem::create_directories(dir);
  const worldpose::Skeleton s = worldpose::default_skeleton();
  worldpose::write_skeleton(s, dir / "skeleton.txt", dir / "shape_basis.bin");
  std::cout << "wrote " << (dir / "skeleton.txt").string() << " and " << (dir / "shape_basis.bin").string()
            << " (fingerprint " << s.fingerprint() << ")\n";
  return 0;
}
