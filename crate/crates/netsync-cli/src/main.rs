fn main() {
    println!("netsync");
}
