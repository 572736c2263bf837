#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "mpgvae/canonical.hpp"
#include "mpgvae/smiles.hpp"
#include "test_util.hpp"

using namespace mpgvae;

namespace {

// Independent kekulization oracle: try every single/double assignment of the
// aromatic bonds and keep those where each aromatic atom carries exactly the
// number of doubles its element/saturation calls for.
std::vector<MolGraph> enumerate_kekule(const ParsedMol& pm) {
  std::vector<std::size_t> aromatic_bonds;
  for (std::size_t i = 0; i < pm.bonds.size(); ++i)
    if (pm.bonds[i].order == 0) aromatic_bonds.push_back(i);

  std::vector<int> sigma(pm.atoms.size(), 0);
  for (const auto& b : pm.bonds) {
    const int add = b.order == 0 ? 1 : b.order;
    sigma[static_cast<std::size_t>(b.u)] += add;
    sigma[static_cast<std::size_t>(b.v)] += add;
  }
  std::vector<int> needs(pm.atoms.size(), 0);
  for (std::size_t v = 0; v < pm.atoms.size(); ++v) {
    if (!pm.atoms[v].aromatic) continue;
    const int h = pm.atoms[v].explicit_h < 0 ? 0 : pm.atoms[v].explicit_h;
    int room = 0;
    switch (pm.atoms[v].element) {
      case 'C': room = 4 - sigma[v] - h; break;
      case 'N': room = 3 - sigma[v] - h; break;
      case 'O': room = 2 - sigma[v] - h; break;
      default: room = 0;
    }
    needs[v] = room >= 1 ? 1 : 0;
  }

  std::vector<MolGraph> out;
  for (std::size_t bits = 0; bits < (1ULL << aromatic_bonds.size()); ++bits) {
    std::vector<int> doubles(pm.atoms.size(), 0);
    MolGraph g;
    for (std::size_t v = 0; v < pm.atoms.size(); ++v)
      g.atoms[v] = pm.atoms[v].element == 'C'   ? Atom::C
                   : pm.atoms[v].element == 'N' ? Atom::N
                   : pm.atoms[v].element == 'O' ? Atom::O
                                                : Atom::F;
    bool ok = true;
    for (const auto& b : pm.bonds)
      g.set_bond(b.u, b.v, b.order == 0 ? Bond::Single : static_cast<Bond>(b.order));
    for (std::size_t j = 0; j < aromatic_bonds.size(); ++j) {
      const auto& b = pm.bonds[aromatic_bonds[j]];
      if (bits & (1ULL << j)) {
        g.set_bond(b.u, b.v, Bond::Double);
        ++doubles[static_cast<std::size_t>(b.u)];
        ++doubles[static_cast<std::size_t>(b.v)];
      }
    }
    for (std::size_t v = 0; v < pm.atoms.size() && ok; ++v)
      if (pm.atoms[v].aromatic && doubles[v] != needs[v]) ok = false;
    if (ok) out.push_back(g);
  }
  return out;
}

std::string temp_file(const char* stem, const std::string& content) {
  std::string path = (std::filesystem::temp_directory_path() / stem).string();
  std::ofstream(path) << content;
  return path;
}

std::size_t offset_of(const std::string& smiles) {
  try {
    (void)parse_smiles(smiles);
  } catch (const ParseError& e) {
    return e.byte_offset;
  }
  return static_cast<std::size_t>(-1);
}

}  // namespace

TEST_CASE("basic parses are pinned") {
  MolGraph c = parse_smiles("C");
  REQUIRE(c.atom_count() == 1);
  REQUIRE(c.atoms[0] == Atom::C);
  REQUIRE(c.bond_count() == 0);

  MolGraph co = parse_smiles("C=O");
  REQUIRE(co.atom_count() == 2);
  REQUIRE(co.atoms[0] == Atom::C);
  REQUIRE(co.atoms[1] == Atom::O);
  REQUIRE(co.bond(0, 1) == Bond::Double);

  // token order is the node order
  MolGraph occ = parse_smiles("OCC");
  REQUIRE(occ.atoms[0] == Atom::O);
  REQUIRE(occ.atoms[1] == Atom::C);
  REQUIRE(occ.atoms[2] == Atom::C);

  MolGraph ring = parse_smiles("C1CC1");
  REQUIRE(ring.atom_count() == 3);
  REQUIRE(ring.bond(0, 1) == Bond::Single);
  REQUIRE(ring.bond(1, 2) == Bond::Single);
  REQUIRE(ring.bond(2, 0) == Bond::Single);
  REQUIRE(ring.ring_count() == 1);

  MolGraph triple = parse_smiles("C#N");
  REQUIRE(triple.bond(0, 1) == Bond::Triple);
}

TEST_CASE("branches attach to the right atom") {
  MolGraph iso = parse_smiles("CC(C)C");
  REQUIRE(iso.bond(0, 1) == Bond::Single);
  REQUIRE(iso.bond(1, 2) == Bond::Single);
  REQUIRE(iso.bond(1, 3) == Bond::Single);
  REQUIRE(iso.bond(2, 3) == Bond::None);

  MolGraph ketone = parse_smiles("CC(=O)C");
  REQUIRE(ketone.bond(1, 2) == Bond::Double);
  REQUIRE(ketone.bond(1, 3) == Bond::Single);

  MolGraph nested = parse_smiles("CC(C(F)F)O");
  REQUIRE(nested.bond(1, 2) == Bond::Single);
  REQUIRE(nested.bond(2, 3) == Bond::Single);
  REQUIRE(nested.bond(2, 4) == Bond::Single);
  REQUIRE(nested.bond(1, 5) == Bond::Single);

  MolGraph quad = parse_smiles("C(C)(C)(C)C");
  for (int v = 1; v <= 4; ++v) REQUIRE(quad.bond(0, v) == Bond::Single);
  REQUIRE(quad.is_valid());
}

TEST_CASE("ring closures carry bond orders") {
  MolGraph both = parse_smiles("C=1CCCCC=1");
  REQUIRE(both.bond(0, 5) == Bond::Double);
  MolGraph one_side = parse_smiles("C1CCCCC=1");
  REQUIRE(one_side.bond(0, 5) == Bond::Double);
  MolGraph open_side = parse_smiles("C=1CCCCC1");
  REQUIRE(open_side.bond(0, 5) == Bond::Double);
  REQUIRE_THROWS_AS(parse_smiles("C=1CCCCC#1"), ParseError);

  MolGraph two_digit = parse_smiles("C%12CCCCC%12");
  REQUIRE(two_digit.bond(0, 5) == Bond::Single);
  REQUIRE(two_digit.ring_count() == 1);

  // digit reuse after closing
  MolGraph reuse = parse_smiles("C1CC1C1CC1");
  REQUIRE(reuse.ring_count() == 2);
}

TEST_CASE("dot separates components") {
  MolGraph two = parse_smiles("C.C");
  REQUIRE(two.atom_count() == 2);
  REQUIRE(two.bond_count() == 0);
  REQUIRE_FALSE(two.is_connected());

  MolGraph mix = parse_smiles("CCO.F");
  REQUIRE(mix.atom_count() == 4);
  REQUIRE(mix.bond(2, 3) == Bond::None);
}

TEST_CASE("bracket atoms carry explicit hydrogens") {
  ParsedMol pm = parse_smiles_raw("[CH3]");
  REQUIRE(pm.atoms.size() == 1);
  REQUIRE(pm.atoms[0].explicit_h == 3);
  REQUIRE_FALSE(pm.atoms[0].aromatic);

  ParsedMol nh = parse_smiles_raw("[nH]");
  REQUIRE(nh.atoms[0].aromatic);
  REQUIRE(nh.atoms[0].element == 'N');
  REQUIRE(nh.atoms[0].explicit_h == 1);

  ParsedMol bare = parse_smiles_raw("[N]");
  REQUIRE(bare.atoms[0].explicit_h == 0);
}

TEST_CASE("parse errors carry byte offsets") {
  REQUIRE(offset_of("CX") == 1);
  REQUIRE(offset_of("C++") == 1);
  REQUIRE(offset_of("=C") == 0);
  REQUIRE(offset_of("C=") == 1);
  REQUIRE(offset_of("C=)") == 2);
  REQUIRE(offset_of("C(C") == 1);
  REQUIRE(offset_of(")C") == 0);
  REQUIRE(offset_of("C1CC") == 1);
  REQUIRE(offset_of("C..C") == 2);
  REQUIRE(offset_of(".C") == 0);
  REQUIRE(offset_of("C.") == 2);
  REQUIRE(offset_of("[X]") == 1);
  REQUIRE(offset_of("[C") == 2);
  REQUIRE(offset_of("[CH2") == 4);
  REQUIRE(offset_of("C=#C") == 2);
  REQUIRE(offset_of("C11") == 2);
  REQUIRE(offset_of("C1C1") == 3);
  REQUIRE(offset_of("C%1C") == 1);
  REQUIRE(offset_of("") == 0);

  try {
    (void)parse_smiles("CCX");
  } catch (const ParseError& e) {
    REQUIRE(std::string(e.what()).find("(byte 2)") != std::string::npos);
  }

  REQUIRE_THROWS_AS(parse_smiles("CCCCCCCCCC"), CapacityError);  // 10 atoms
  REQUIRE_NOTHROW(parse_smiles("CCCCCCCCC"));                    // 9 is fine
}

TEST_CASE("benzene kekulizes to one of exactly two alternating forms") {
  ParsedMol pm = parse_smiles_raw("c1ccccc1");
  auto oracle = enumerate_kekule(pm);
  REQUIRE(oracle.size() == 2);
  for (const auto& form : oracle) {
    for (int v = 0; v < 6; ++v) REQUIRE(form.valence_sum(v) == 3);  // one implicit H each
    REQUIRE(form.is_valid());
  }
  MolGraph ours = kekulize(pm);
  REQUIRE((ours == oracle[0] || ours == oracle[1]));
  REQUIRE(ours.is_valid());
  // deterministic
  REQUIRE(kekulize(pm) == ours);
}

TEST_CASE("furan: oxygen gets no double bond") {
  ParsedMol pm = parse_smiles_raw("c1ccoc1");
  auto oracle = enumerate_kekule(pm);
  REQUIRE(oracle.size() == 1);
  MolGraph ours = kekulize(pm);
  REQUIRE(ours == oracle[0]);
  // find the oxygen and check it only has singles
  for (int v = 0; v < 5; ++v)
    if (ours.atoms[static_cast<std::size_t>(v)] == Atom::O) {
      REQUIRE(ours.valence_sum(v) == 2);
      for (int u = 0; u < 5; ++u) REQUIRE(ours.bond(v, u) != Bond::Double);
    }
  int doubles = 0;
  for (int u = 0; u < 5; ++u)
    for (int v = u + 1; v < 5; ++v) doubles += ours.bond(u, v) == Bond::Double;
  REQUIRE(doubles == 2);
  REQUIRE(ours.is_valid());
}

TEST_CASE("pyrrole and pyridine nitrogen rules") {
  MolGraph pyrrole = parse_smiles("c1cc[nH]c1");
  REQUIRE(pyrrole.is_valid());
  for (int v = 0; v < 5; ++v)
    if (pyrrole.atoms[static_cast<std::size_t>(v)] == Atom::N) {
      REQUIRE(pyrrole.valence_sum(v) == 2);  // the explicit H fills valence 3
      for (int u = 0; u < 5; ++u) REQUIRE(pyrrole.bond(v, u) != Bond::Double);
    }

  MolGraph pyridine = parse_smiles("c1ccncc1");
  REQUIRE(pyridine.is_valid());
  for (int v = 0; v < 6; ++v)
    if (pyridine.atoms[static_cast<std::size_t>(v)] == Atom::N)
      REQUIRE(pyridine.valence_sum(v) == 3);  // one double, no H
}

TEST_CASE("kekulization failures are rejected") {
  // five-ring of bare aromatic carbons: all five need a double, odd count
  REQUIRE_THROWS_AS(parse_smiles("c1cccc1"), KekulizeError);
}

TEST_CASE("already kekulized input passes through unchanged") {
  ParsedMol pm = parse_smiles_raw("C1=CC=CC=C1");
  REQUIRE_FALSE(pm.has_aromatic());
  MolGraph g = kekulize(pm);
  REQUIRE(g.bond(0, 1) == Bond::Double);
  REQUIRE(g.bond(1, 2) == Bond::Single);
  REQUIRE(g.bond(2, 3) == Bond::Double);
  REQUIRE(g.bond(5, 0) == Bond::Single);

  // aromatic and pre-kekulized notations agree up to isomorphism
  REQUIRE(canonical_form(parse_smiles("c1ccccc1")) ==
          canonical_form(parse_smiles("C1=CC=CC=C1")));
}

TEST_CASE("writer round trips") {
  REQUIRE(write_smiles(parse_smiles("C")) == "C");
  REQUIRE(write_smiles_any(MolGraph{}) == "");
  REQUIRE_THROWS_AS(write_smiles(MolGraph{}), ContractViolation);

  const std::vector<std::string> fixtures = {
      "C", "O", "N", "F", "CC", "C=O", "C#N", "CCO", "CC(C)C", "CC(=O)O", "C1CC1",
      "C1CCCCC1", "c1ccccc1", "c1ccoc1", "c1ccncc1", "c1cc[nH]c1", "C.C", "CCO.F",
      "N#CC1CC1F", "OC1=CC=CC1", "FC(F)(F)C", "C1CC2CCC1C2", "CN(C)C", "CC(C)(C)C",
      "O=C=O", "c1ccn2ccccc12"};
  for (const auto& s : fixtures) {
    CAPTURE(s);
    MolGraph g;
    try {
      g = parse_smiles(s);
    } catch (const CapacityError&) {
      continue;
    }
    const std::string written = write_smiles_any(g);
    CAPTURE(written);
    MolGraph back = parse_smiles(written);
    REQUIRE(canonical_form(back) == canonical_form(g));
  }
}

TEST_CASE("writer round trips random molecules") {
  Rng rng(71);
  for (int trial = 0; trial < 300; ++trial) {
    MolGraph g = testutil::random_molecule(rng);
    const std::string s = write_smiles_any(g);
    CAPTURE(s);
    MolGraph back = parse_smiles(s);
    REQUIRE(canonical_form(back) == canonical_form(g));
  }
}

TEST_CASE("writer round trips invalid graphs leniently") {
  Rng rng(73);
  int tried = 0;
  for (int trial = 0; trial < 400 && tried < 50; ++trial) {
    MolGraph g = testutil::random_graph(rng, 9, 0.6);
    if (g.atom_count() == 0 || g.is_valid()) continue;
    ++tried;
    const std::string s = write_smiles_any(g);
    CAPTURE(s);
    MolGraph back = parse_smiles(s);
    REQUIRE(canonical_form(back) == canonical_form(g));
    REQUIRE_THROWS_AS(write_smiles(g), ContractViolation);
  }
  REQUIRE(tried == 50);
}

TEST_CASE("dataset loader reports by reason") {
  SECTION("plain two-line file") {
    auto path = temp_file("ds_two.smi", "C\nC=O\n");
    auto [mols, report] = load_dataset(path);
    REQUIRE(mols.size() == 2);
    REQUIRE(report.parsed == 2);
    REQUIRE(report.lines == 2);
    std::remove(path.c_str());
  }
  SECTION("annotations after whitespace are ignored") {
    auto path = temp_file("ds_ann.smi", "C 1.23 gdb_1\nC=O\t-0.5\n");
    auto [mols, report] = load_dataset(path);
    REQUIRE(report.parsed == 2);
    REQUIRE(mols[1].bond(0, 1) == Bond::Double);
    std::remove(path.c_str());
  }
  SECTION("rejections are counted by reason") {
    auto path = temp_file("ds_rej.smi",
                          "C\n"
                          "CCCCCCCCCCC\n"      // 11 atoms: over capacity
                          "CX\n"               // parse error
                          "c1cccc1\n"          // kekulize failure
                          "C=C(=C)(=C)=C\n"    // over-valent carbon: valence reject
                          "\n"                 // blank
                          "C=O\n");
    auto [mols, report] = load_dataset(path);
    REQUIRE(mols.size() == 2);
    REQUIRE(report.lines == 7);
    REQUIRE(report.parsed == 2);
    REQUIRE(report.blank == 1);
    REQUIRE(report.parse_errors == 1);
    REQUIRE(report.over_capacity == 1);
    REQUIRE(report.kekulize_failures == 1);
    REQUIRE(report.valence_rejects == 1);
    REQUIRE(report.first_errors.size() == 4);
    REQUIRE(report.summary().find("2/7") != std::string::npos);
    std::remove(path.c_str());
  }
  SECTION("limit stops early") {
    auto path = temp_file("ds_lim.smi", "C\nN\nO\nCC\n");
    auto [mols, report] = load_dataset(path, 2);
    REQUIRE(mols.size() == 2);
    REQUIRE(report.parsed == 2);
    std::remove(path.c_str());
  }
  SECTION("missing file raises") {
    REQUIRE_THROWS_AS(load_dataset("/no/such/file.smi"), IoError);
  }
}
