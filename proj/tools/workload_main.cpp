// Reference workloads with deterministic, parameterized resource use:
//   synapse-workload compute <iterations>
//   synapse-workload write   <iterations> [block_bytes] [path]
//   synapse-workload mixed   <iterations> [path]
// compute: pure CPU loop. write: fill+write one block per iteration.
// mixed: compute + write + read phases per iteration with a memory arena
// that grows to a plateau. Iteration counts scale runtimes over several
// orders of magnitude.

#include <fcntl.h>
#include <unistd.h>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

namespace {

constexpr std::uint64_t kWrapBytes = 64ull << 20;

// ~200k floating point ops with independent accumulator chains.
double compute_unit(double seed) {
  double a0 = seed + 0.1, a1 = seed + 0.2, a2 = seed + 0.3, a3 = seed + 0.4;
  for (int i = 0; i < 50000; ++i) {
    a0 = a0 * 1.0000001 + 1e-9;
    a1 = a1 * 0.9999999 + 2e-9;
    a2 = a2 * 1.0000002 + 3e-9;
    a3 = a3 * 0.9999998 + 4e-9;
  }
  return a0 + a1 + a2 + a3;
}

void fill_block(std::vector<char>& buf, std::uint64_t& lcg) {
  auto* words = reinterpret_cast<std::uint64_t*>(buf.data());
  const std::size_t n = buf.size() / sizeof(std::uint64_t);
  for (std::size_t i = 0; i < n; ++i) {
    lcg = lcg * 6364136223846793005ull + 1442695040888963407ull;
    words[i] = lcg;
  }
}

int open_scratch(const std::string& path) {
  const int fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) {
    std::perror("open scratch");
    std::exit(1);
  }
  return fd;
}

std::string default_path(const char* label) {
  const char* tmp = std::getenv("TMPDIR");
  std::string dir = tmp && *tmp ? tmp : "/tmp";
  return dir + "/synapse-workload-" + label + "-" + std::to_string(getpid());
}

int run_compute(std::uint64_t iterations) {
  volatile double sink = 0.0;
  for (std::uint64_t i = 0; i < iterations; ++i)
    sink = sink + compute_unit(static_cast<double>(i % 1000) * 1e-3);
  return 0;
}

int run_write(std::uint64_t iterations, std::uint64_t block_bytes,
              const std::string& path) {
  const int fd = open_scratch(path);
  std::vector<char> buf(block_bytes);
  std::uint64_t lcg = 0x243f6a8885a308d3ull;
  std::uint64_t offset = 0;
  for (std::uint64_t i = 0; i < iterations; ++i) {
    fill_block(buf, lcg);
    if (offset + block_bytes > kWrapBytes) offset = 0;
    if (pwrite(fd, buf.data(), buf.size(), static_cast<off_t>(offset)) < 0) {
      std::perror("pwrite");
      return 1;
    }
    offset += block_bytes;
  }
  close(fd);
  unlink(path.c_str());
  return 0;
}

int run_mixed(std::uint64_t iterations, const std::string& path) {
  constexpr std::uint64_t kBlock = 1u << 20;
  constexpr std::uint64_t kArenaStep = 4ull << 20;
  constexpr std::uint64_t kArenaCap = 128ull << 20;

  const int fd = open_scratch(path);
  std::vector<char> buf(kBlock);
  std::vector<std::vector<char>> arena;
  std::uint64_t arena_bytes = 0;
  std::uint64_t lcg = 0x13198a2e03707344ull;
  std::uint64_t write_off = 0, read_off = 0, written_extent = 0;
  volatile double sink = 0.0;

  for (std::uint64_t i = 0; i < iterations; ++i) {
    for (int u = 0; u < 60; ++u)
      sink = sink + compute_unit(static_cast<double>((i + u) % 1000) * 1e-3);

    fill_block(buf, lcg);
    if (write_off + kBlock > kWrapBytes) write_off = 0;
    if (pwrite(fd, buf.data(), buf.size(), static_cast<off_t>(write_off)) < 0) {
      std::perror("pwrite");
      return 1;
    }
    write_off += kBlock;
    if (written_extent < kWrapBytes) written_extent += kBlock;

    if (read_off + kBlock > written_extent) read_off = 0;
    if (pread(fd, buf.data(), buf.size(), static_cast<off_t>(read_off)) < 0) {
      std::perror("pread");
      return 1;
    }
    read_off += kBlock;

    if (i % 16 == 0 && arena_bytes < kArenaCap) {
      arena.emplace_back(kArenaStep);
      std::memset(arena.back().data(), 0x42, kArenaStep);
      arena_bytes += kArenaStep;
    }
  }
  close(fd);
  unlink(path.c_str());
  return 0;
}

void usage(const char* argv0) {
  std::fprintf(stderr,
               "usage: %s compute <iterations>\n"
               "       %s write   <iterations> [block_bytes] [path]\n"
               "       %s mixed   <iterations> [path]\n",
               argv0, argv0, argv0);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    usage(argv[0]);
    return 2;
  }
  const std::string mode = argv[1];
  const std::uint64_t iterations = std::strtoull(argv[2], nullptr, 10);

  if (mode == "compute") return run_compute(iterations);
  if (mode == "write") {
    const std::uint64_t block =
        argc > 3 ? std::strtoull(argv[3], nullptr, 10) : (1u << 20);
    const std::string path = argc > 4 ? argv[4] : default_path("write");
    if (block == 0 || block > kWrapBytes) {
      std::fprintf(stderr, "block_bytes out of range\n");
      return 2;
    }
    return run_write(iterations, block, path);
  }
  if (mode == "mixed") {
    const std::string path = argc > 3 ? argv[3] : default_path("mixed");
    return run_mixed(iterations, path);
  }
  usage(argv[0]);
  return 2;
}
